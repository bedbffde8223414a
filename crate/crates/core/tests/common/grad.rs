use pdnet::diffmath::{
    grad_check, jvp_check, GradCheckOptions, GraphBuilder, Inputs, NodeId, ParamStore, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POINTS: u64 = 100;
const ROWS: usize = 2;

type Body = fn(&mut GraphBuilder<f64>, NodeId, NodeId) -> NodeId;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Two-parameter bodies, one per primitive.
pub fn primitives() -> Vec<(&'static str, Body)> {
    vec![
        ("sigmoid", |b, a, _| b.sigmoid(a)),
        ("relu", |b, a, _| b.relu(a)),
        ("hadamard", |b, a, c| b.hadamard(a, c)),
        ("concat", |b, a, c| {
            let x = b.concat(&[a, c]);
            // a non-linearity keeps the two halves distinguishable
            b.hadamard(x, x)
        }),
        ("l2-normalize", |b, a, c| {
            let n = b.l2_normalize(a);
            b.hadamard(n, c)
        }),
        ("sum", |b, a, c| {
            let s = b.sum_elements(a);
            let t = b.hadamard(c, c);
            let u = b.sum_elements(t);
            b.hadamard(s, u)
        }),
    ]
}

/// Builds `loss = Σ w · BCE(σ(Σ_row body(a, b)), y)` with parameters `a`
/// and `b` (`[ROWS, 3]`) and checks it at `POINTS` draws. Returns the
/// largest relative error seen.
pub fn check_primitive(name: &str, body: Body) -> Result<f64, String> {
    let mut b = GraphBuilder::<f64>::new();
    let pa = b.param("a").unwrap();
    let pb = b.param("b").unwrap();
    let out = body(&mut b, pa, pb);
    let s = b.sum_elements(out);
    let p = b.sigmoid(s);
    let y = b.input("y");
    let w = b.input("w");
    let loss = b.bce(p, y, Some(w));
    let g = b.build();
    let mut worst = 0.0f64;
    for point in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(point);
        let params: ParamStore<f64> = [
            ("a", random(&mut rng, ROWS, 3)),
            ("b", random(&mut rng, ROWS, 3)),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v))
        .collect();
        let mut inputs = Inputs::new();
        inputs.insert("y".into(), Tensor::matrix(ROWS, 1, vec![1.0, 0.0]).unwrap());
        inputs.insert("w".into(), Tensor::matrix(ROWS, 1, vec![0.7, 1.3]).unwrap());
        let report = grad_check(&g, &params, &inputs, loss, &GradCheckOptions::default()).unwrap();
        if !report.passed() {
            return Err(format!("{name} at point {point}:\n{}", report.to_text()));
        }
        let jvp = jvp_check(&g, &params, &inputs, loss, 1e-5, point).unwrap();
        if jvp > 1e-4 {
            return Err(format!("{name} directional error {jvp} at point {point}"));
        }
        worst = worst.max(report.max_rel_error()).max(jvp);
    }
    Ok(worst)
}

/// Dense layer with bias, checked with respect to weights and bias.
pub fn check_affine() -> Result<f64, String> {
    let mut b = GraphBuilder::<f64>::new();
    let x = b.input("x");
    let out = b.dense(x, "fc").unwrap();
    let s = b.sum_elements(out);
    let p = b.sigmoid(s);
    let y = b.input("y");
    let loss = b.bce(p, y, None);
    let g = b.build();
    let mut worst = 0.0f64;
    for point in 0..POINTS {
        let mut rng = ChaCha8Rng::seed_from_u64(point);
        let mut params = ParamStore::new();
        params.insert("fc.w".to_owned(), random(&mut rng, 3, 4));
        params.insert(
            "fc.b".to_owned(),
            Tensor::vector((0..4).map(|_| rng.random_range(-1.0..1.0)).collect()),
        );
        let mut inputs = Inputs::new();
        inputs.insert("x".into(), random(&mut rng, ROWS, 3));
        inputs.insert("y".into(), Tensor::matrix(ROWS, 1, vec![0.0, 1.0]).unwrap());
        let report = grad_check(&g, &params, &inputs, loss, &GradCheckOptions::default()).unwrap();
        if !report.passed() {
            return Err(format!("affine at point {point}:\n{}", report.to_text()));
        }
        worst = worst.max(report.max_rel_error());
    }
    Ok(worst)
}
