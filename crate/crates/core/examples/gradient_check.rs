//! Compare backpropagated gradients of a small network with central
//! finite differences.
//!
//! cargo run --release --example gradient_check

use kspace_recon::loss::loss_and_grad;
use kspace_recon::nn::{Mode, NetConfig, RdUnet, Tensor4, Visit};
use kspace_recon::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(net: &mut RdUnet<f64>, x: &Tensor4<f64>, y: &Tensor4<f64>) -> Result<f64> {
    Ok(loss_and_grad(&net.forward(x, Mode::Train)?, y, 0.01)?.0.total)
}

fn nudge(net: &mut RdUnet<f64>, name: &str, i: usize, delta: f64) {
    net.visit_mut("", &mut |n, p| {
        if n == name {
            p.value[i] += delta;
        }
    });
}

fn main() -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut net = RdUnet::<f64>::new(NetConfig { depth: 1, base_channels: 4, ..Default::default() }, 1)?;
    let x = Tensor4::from_fn([2, 1, 8, 8], |_| rng.random_range(-1.0..1.0));
    let y = Tensor4::from_fn([2, 1, 8, 8], |_| rng.random_range(-1.0..1.0));

    let (_, g) = loss_and_grad(&net.forward(&x, Mode::Train)?, &y, 0.01)?;
    net.backward(&g)?;
    let mut analytic = Vec::new();
    net.visit("", &mut |name, p| {
        if let Some(g) = &p.grad {
            analytic.push((name.to_string(), g.clone()));
        }
    });

    let h = 1e-5;
    for (name, grad) in &analytic {
        let (mut diff, mut norm, mut norm_a) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..grad.len() {
            nudge(&mut net, name, i, h);
            let up = loss(&mut net, &x, &y)?;
            nudge(&mut net, name, i, -2.0 * h);
            let down = loss(&mut net, &x, &y)?;
            nudge(&mut net, name, i, h);
            let fd = (up - down) / (2.0 * h);
            diff += (fd - grad[i]).powi(2);
            norm += fd * fd;
            norm_a += grad[i] * grad[i];
        }
        // biases feeding batch norm have an exactly zero gradient
        let scale = norm.sqrt().max(norm_a.sqrt()).max(1e-6);
        println!(
            "{name:<24} {:>5} values  |grad| {:.1e}  relative error {:.1e}",
            grad.len(),
            norm_a.sqrt(),
            diff.sqrt() / scale
        );
    }
    Ok(())
}
