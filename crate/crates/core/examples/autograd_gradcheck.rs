//! Builds a small graph on the tape, backpropagates, and compares every
//! gradient with central finite differences.
//!
//! cargo run --release --example autograd_gradcheck

use convrec_nmt::gradcheck::{check_op, DEFAULT_STEP};
use convrec_nmt::{Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> convrec_nmt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Tensor::uniform(&[2, 3], -1.0, 1.0, &mut rng);
    let w = Tensor::uniform(&[3, 4], -1.0, 1.0, &mut rng);
    let b = Tensor::uniform(&[4], -1.0, 1.0, &mut rng);

    // loss = sum(softmax(tanh(x w + b)) * targets)
    let targets = Tensor::new(vec![2, 4], vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])?;
    let build = |tape: &mut Tape, v: &[convrec_nmt::Var]| {
        let h = tape.matmul(v[0], v[1])?;
        let h = tape.add(h, v[2])?;
        let h = tape.tanh(h);
        let p = tape.softmax(h, 1)?;
        let t = tape.constant(&targets);
        let picked = tape.mul(p, t)?;
        Ok(tape.sum(picked))
    };

    let mut tape = Tape::new();
    let vars = [tape.leaf(&x), tape.leaf(&w), tape.leaf(&b)];
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    println!("loss = {:.6}", tape.value(loss)[0]);
    println!("dloss/db = {:?}", tape.grad(vars[2]).unwrap());

    let report = check_op(&[x, w, b], DEFAULT_STEP, build)?;
    println!(
        "{} gradient entries checked, max relative error {:.2e}",
        report.checked, report.max_relative_error
    );
    Ok(())
}
