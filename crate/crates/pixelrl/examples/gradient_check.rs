//! Runs the numeric verification suites: the analytic gradients of the policy,
//! value, recurrent, and reward-kernel parameters against central finite
//! differences on an f64 toy network, and the return recursion against its
//! closed form. Slow but exact; the same checks back the test suite.

fn main() {
    print!("returns vs closed form, 25 random cases... ");
    match pixelrl::oracle::verify_returns(101, 25) {
        Ok(()) => println!("ok"),
        Err(e) => {
            println!("FAIL\n{e}");
            std::process::exit(1);
        }
    }

    print!("analytic vs numeric gradients, 2 toy episodes... ");
    match pixelrl::oracle::verify_gradients(3, 1) {
        Ok(()) => println!("ok"),
        Err(e) => {
            println!("FAIL\n{e}");
            std::process::exit(1);
        }
    }

    println!();
    println!("every backpropagated derivative agreed with finite differences.");
}
