//! Convolutional gated recurrent unit carrying per-pixel state across the
//! steps of an episode: z = sigmoid(Wxz*x + Whz*h), r = sigmoid(Wxr*x + Whr*h),
//! h~ = tanh(Wxh*x + Whh*(r.h)), h' = (1-z).h + z.h~, all convs 3x3 dilation 1.

use ndarray::Array3;
use rand::Rng;

use super::conv::Conv2d;
use super::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGru<F: Real> {
    pub wxz: Conv2d<F>,
    pub whz: Conv2d<F>,
    pub wxr: Conv2d<F>,
    pub whr: Conv2d<F>,
    pub wxh: Conv2d<F>,
    pub whh: Conv2d<F>,
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct GruCache<F: Real> {
    pub x: Array3<F>,
    pub h_prev: Array3<F>,
    pub z: Array3<F>,
    pub r: Array3<F>,
    pub rh: Array3<F>,
    pub h_tilde: Array3<F>,
}

fn sigmoid<F: Real>(v: F) -> F {
    F::one() / (F::one() + (-v).exp())
}

impl<F: Real> ConvGru<F> {
    pub fn zeros(cx: usize, ch: usize) -> Self {
        Self {
            wxz: Conv2d::zeros(cx, ch, 1),
            whz: Conv2d::zeros(ch, ch, 1),
            wxr: Conv2d::zeros(cx, ch, 1),
            whr: Conv2d::zeros(ch, ch, 1),
            wxh: Conv2d::zeros(cx, ch, 1),
            whh: Conv2d::zeros(ch, ch, 1),
        }
    }

    pub fn init(cx: usize, ch: usize, rng: &mut impl Rng) -> Self {
        Self {
            wxz: Conv2d::init(cx, ch, 1, rng),
            whz: Conv2d::init(ch, ch, 1, rng),
            wxr: Conv2d::init(cx, ch, 1, rng),
            whr: Conv2d::init(ch, ch, 1, rng),
            wxh: Conv2d::init(cx, ch, 1, rng),
            whh: Conv2d::init(ch, ch, 1, rng),
        }
    }

    pub fn convs(&self) -> [&Conv2d<F>; 6] {
        [&self.wxz, &self.whz, &self.wxr, &self.whr, &self.wxh, &self.whh]
    }

    pub fn convs_mut(&mut self) -> [&mut Conv2d<F>; 6] {
        [
            &mut self.wxz,
            &mut self.whz,
            &mut self.wxr,
            &mut self.whr,
            &mut self.wxh,
            &mut self.whh,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.convs().iter().map(|c| c.param_count()).sum()
    }

    pub fn forward(&self, x: &Array3<F>, h_prev: &Array3<F>) -> (Array3<F>, GruCache<F>) {
        let z = (self.wxz.forward(x) + self.whz.forward(h_prev)).mapv(sigmoid);
        let r = (self.wxr.forward(x) + self.whr.forward(h_prev)).mapv(sigmoid);
        let rh = &r * h_prev;
        let h_tilde = (self.wxh.forward(x) + self.whh.forward(&rh)).mapv(F::tanh);
        // h' = h_prev + z.(h~ - h_prev), the same quantity with fewer allocs.
        let h_new = h_prev + &(&z * &(&h_tilde - h_prev));
        let cache = GruCache {
            x: x.clone(),
            h_prev: h_prev.clone(),
            z,
            r,
            rh,
            h_tilde,
        };
        (h_new, cache)
    }

    /// Accumulates parameter gradients into `acc`; returns (dx, dh_prev).
    /// `dh` is the full gradient arriving at h', both the head path and the
    /// next step's recurrent path summed by the caller.
    pub fn backward(
        &self,
        cache: &GruCache<F>,
        dh: &Array3<F>,
        acc: &mut ConvGru<F>,
    ) -> (Array3<F>, Array3<F>) {
        let one = F::one();
        let dz = dh * &(&cache.h_tilde - &cache.h_prev);
        let dht = dh * &cache.z;
        let mut dh_prev = dh * &cache.z.mapv(|z| one - z);

        // tanh branch: a_h = Wxh*x + Whh*(r.h_prev).
        let dah = &dht * &cache.h_tilde.mapv(|t| one - t * t);
        let mut dx = self.wxh.backward(&cache.x, &dah, &mut acc.wxh);
        let drh = self.whh.backward(&cache.rh, &dah, &mut acc.whh);
        let dr = &drh * &cache.h_prev;
        dh_prev += &(&drh * &cache.r);

        // update gate.
        let daz = &dz * &cache.z.mapv(|z| z * (one - z));
        dx += &self.wxz.backward(&cache.x, &daz, &mut acc.wxz);
        dh_prev += &self.whz.backward(&cache.h_prev, &daz, &mut acc.whz);

        // reset gate.
        let dar = &dr * &cache.r.mapv(|r| r * (one - r));
        dx += &self.wxr.backward(&cache.x, &dar, &mut acc.wxr);
        dh_prev += &self.whr.backward(&cache.h_prev, &dar, &mut acc.whr);

        (dx, dh_prev)
    }
}
