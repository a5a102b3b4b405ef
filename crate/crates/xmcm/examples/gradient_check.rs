//! Verify analytic gradients against central finite differences.
//!
//! Every loss returns exact gradients; this program probes a few random
//! coordinates of each and prints the worst deviation found. The same
//! check, over every coordinate and many seeds, runs in the test suite.
//!
//! Run with: cargo run --example gradient_check

use xmcm::losses::{
    arcface_loss, cosface_loss, similarity_loss, softmax_loss, SimilarityKind,
};
use xmcm::numerics::{l2_norm, Matrix, Rng, Vector};

const H: f64 = 1e-5;

fn random_vector(rng: &mut Rng, dim: usize) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_| rng.uniform(-1.0, 1.0));
        if l2_norm(&v) > 0.3 {
            return v;
        }
    }
}

fn main() -> xmcm::Result<()> {
    let mut rng = Rng::new(1);
    let dim = 6;
    let classes = 4;
    let x = random_vector(&mut rng, dim);
    let w = Matrix::from_fn(classes, dim, |_, _| rng.uniform(-1.0, 1.0));
    let y = 2;

    let mut worst: f64 = 0.0;
    let mut check = |name: &str, analytic: f64, fd: f64| {
        let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(err);
        println!("{name:<28} analytic {analytic:>12.8}  fd {fd:>12.8}  rel err {err:.2e}");
    };

    // one feature coordinate and one prototype entry per loss
    let i = 3;
    let perturb = |x: &Vector, delta: f64| {
        let mut p = x.clone();
        p[i] += delta;
        p
    };

    let out = softmax_loss(&x, y, &w)?;
    let fd = (softmax_loss(&perturb(&x, H), y, &w)?.value
        - softmax_loss(&perturb(&x, -H), y, &w)?.value)
        / (2.0 * H);
    check("softmax d_feature", out.d_feature[i], fd);

    let (s, mu) = (30.0, 0.2);
    let out = cosface_loss(&x, y, &w, s, mu)?;
    let fd = (cosface_loss(&perturb(&x, H), y, &w, s, mu)?.value
        - cosface_loss(&perturb(&x, -H), y, &w, s, mu)?.value)
        / (2.0 * H);
    check("cosface d_feature", out.d_feature[i], fd);

    let out = arcface_loss(&x, y, &w, s, mu)?;
    let mut wp = w.clone();
    wp.set(y, i, w.get(y, i) + H);
    let mut wm = w.clone();
    wm.set(y, i, w.get(y, i) - H);
    let fd = (arcface_loss(&x, y, &wp, s, mu)?.value - arcface_loss(&x, y, &wm, s, mu)?.value)
        / (2.0 * H);
    check("arcface d_prototype", out.d_prototype.get(y, i), fd);

    let m_pos = random_vector(&mut rng, dim);
    let m_neg = random_vector(&mut rng, dim);
    for kind in [SimilarityKind::Difference, SimilarityKind::Piecewise] {
        let out = similarity_loss(&x, &m_pos, &m_neg, 0.2, kind)?;
        let fd = (similarity_loss(&perturb(&x, H), &m_pos, &m_neg, 0.2, kind)?.value
            - similarity_loss(&perturb(&x, -H), &m_pos, &m_neg, 0.2, kind)?.value)
            / (2.0 * H);
        check(&format!("similarity {kind:?} d_video"), out.d_video[i], fd);
    }

    println!("\nworst relative error: {worst:.2e}");
    assert!(worst < 1e-5);
    Ok(())
}
