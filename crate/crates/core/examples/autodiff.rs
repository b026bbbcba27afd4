//! Records a small computation on the tape, runs the backward pass and
//! compares one gradient with a central finite difference.
//!
//! ```text
//! cargo run --example autodiff
//! ```

use relmatch::{Tape, Tensor};

fn loss(w: &Tensor, x: &Tensor) -> relmatch::Result<(f64, Tensor)> {
    let tape = Tape::new();
    let w = tape.leaf(w.clone());
    let x = tape.leaf(x.clone());
    let h = tape.tanh(tape.matmul(x, w)?);
    let p = tape.softmax(h);
    let l = tape.cross_entropy(p, &[1, 0])?;
    let grads = tape.backward(l)?;
    let gw = grads.get(w).cloned().unwrap_or_else(|| Tensor::zeros(&[2, 3]));
    Ok((tape.value(l).item(), gw))
}

fn main() -> relmatch::Result<()> {
    let x = Tensor::from_rows(&[[0.5, -1.0], [2.0, 0.25]])?;
    let w = Tensor::from_rows(&[[0.1, -0.3, 0.7], [0.4, 0.2, -0.5]])?;
    let (value, grad) = loss(&w, &x)?;
    println!("loss = {value:.6}");
    for (i, row) in grad.row_iter().enumerate() {
        println!("dL/dW[{i}] = {row:.6?}");
    }

    let h = 1e-6;
    let mut data = w.data().to_vec();
    data[1] += h;
    let (up, _) = loss(&Tensor::matrix(2, 3, data.clone())?, &x)?;
    data[1] -= 2.0 * h;
    let (down, _) = loss(&Tensor::matrix(2, 3, data)?, &x)?;
    println!(
        "dL/dW[0][1]: tape {:.9}, finite difference {:.9}",
        grad.data()[1],
        (up - down) / (2.0 * h)
    );
    Ok(())
}
