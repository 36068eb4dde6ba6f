//! Computes n-step returns with and without the reward kernel and checks the
//! recursion against the independently derived closed form. With the kernel a
//! pixel's return absorbs discounted rewards earned by its neighbors.

use ndarray::Array2;
use pixelrl::oracle::closed_form_returns;
use pixelrl::rmc::compute_returns;

fn main() -> pixelrl::Result<()> {
    let (h, w) = (6, 6);
    let gamma = 0.95;

    // One pixel earns all the reward at every step.
    let mut spike = Array2::zeros((h, w));
    spike[[2, 2]] = 1.0;
    let rewards = vec![spike.clone(), spike.clone(), spike];
    let bootstrap = Array2::zeros((h, w));

    // A kernel that keeps most mass in place and leaks some to the 8 neighbors.
    let mut kernel = Array2::from_elem((3, 3), 0.05);
    kernel[[1, 1]] = 0.6;

    let (plain, _) = compute_returns(&rewards, &bootstrap, None, gamma)?;
    let (spread, _) = compute_returns(&rewards, &bootstrap, Some(&kernel), gamma)?;

    println!("returns at t=0, reward spike at (2,2), gamma {gamma}:");
    println!(
        "  spike pixel   plain {:8.4}   with kernel {:8.4}",
        plain[0][[2, 2]],
        spread[0][[2, 2]]
    );
    println!(
        "  its neighbor  plain {:8.4}   with kernel {:8.4}",
        plain[0][[2, 3]],
        spread[0][[2, 3]]
    );
    println!(
        "  two away      plain {:8.4}   with kernel {:8.4}",
        plain[0][[2, 4]],
        spread[0][[2, 4]]
    );

    // The recursion must agree with the unrolled closed form at every step.
    let reference = closed_form_returns(&rewards, &bootstrap, &kernel, gamma);
    let mut max_diff = 0f64;
    for (a, b) in spread.iter().zip(&reference) {
        for (x, y) in a.iter().zip(b.iter()) {
            max_diff = max_diff.max((x - y).abs());
        }
    }
    println!();
    println!("recursion vs closed form, max abs diff: {max_diff:.2e}");
    assert!(max_diff < 1e-12);

    // An identity kernel must reproduce the plain returns bit for bit.
    let mut identity = Array2::zeros((3, 3));
    identity[[1, 1]] = 1.0;
    let (via_identity, _) = compute_returns(&rewards, &bootstrap, Some(&identity), gamma)?;
    assert_eq!(plain, via_identity);
    println!("identity kernel matches plain returns exactly");
    Ok(())
}
