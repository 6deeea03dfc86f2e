//! Every differentiable tape operation against central differences (64-bit).

use adatosk_core::numerics::{finite_diff_check, GradCheckConfig, Tape, Tensor, Var};
use adatosk_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Build = fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

/// Reduces an arbitrary output to a scalar with fixed random weights so that
/// every output element carries a distinct upstream gradient.
fn scalarize(tape: &mut Tape<f64>, out: Var) -> Var {
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = tape.leaf_raw(r, c, w);
    let prod = tape.mul(out, w).unwrap();
    tape.mean_all(prod)
}

fn eval(build: Build, inputs: &[Tensor<f64>]) -> Result<(f64, Vec<Tensor<f64>>)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = build(&mut tape, &vars)?;
    let loss = scalarize(&mut tape, out);
    let grads = tape.backward(loss);
    let g = vars.iter().zip(inputs).map(|(&v, t)| Tensor::new(t.shape().to_vec(), grads.get(v)).unwrap()).collect();
    Ok((tape.scalar(loss), g))
}

fn check(name: &str, build: Build, shapes: &[&[usize]]) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.len() as u64);
    let inputs: Vec<_> = shapes.iter().map(|s| random(s, &mut rng)).collect();
    let (_, analytic) = eval(build, &inputs).unwrap();
    let cfg = GradCheckConfig { epsilon: 1e-6, sample_count: 64, abs_floor: 1e-5, seed: 1 };
    let report = finite_diff_check(|p| eval(build, p).map(|(l, _)| l), &inputs, &analytic, &cfg).unwrap();
    assert!(report.max_rel_error < 1e-5, "{name}: max relative error {} at {:?}", report.max_rel_error, report.worst());
}

#[test]
fn matmul_and_transpose() {
    check("matmul", |t, v| t.matmul(v[0], v[1]), &[&[3, 4], &[4, 2]]);
    check("transpose", |t, v| Ok(t.transpose(v[0])), &[&[3, 5]]);
}

#[test]
fn elementwise_binary() {
    check("add", |t, v| t.add(v[0], v[1]), &[&[2, 3], &[2, 3]]);
    check("sub", |t, v| t.sub(v[0], v[1]), &[&[2, 3], &[2, 3]]);
    check("mul", |t, v| t.mul(v[0], v[1]), &[&[2, 3], &[2, 3]]);
    check("add_row", |t, v| t.add_row(v[0], v[1]), &[&[4, 3], &[1, 3]]);
    check("mul_row", |t, v| t.mul_row(v[0], v[1]), &[&[4, 3], &[1, 3]]);
    check("mul_col", |t, v| t.mul_col(v[0], v[1]), &[&[4, 3], &[4, 1]]);
}

#[test]
fn elementwise_unary() {
    check("affine", |t, v| Ok(t.affine(v[0], -0.7, 0.3)), &[&[3, 3]]);
    check("gelu", |t, v| Ok(t.gelu(v[0])), &[&[3, 4]]);
    check("relu", |t, v| Ok(t.relu(v[0])), &[&[3, 4]]);
    check("abs", |t, v| Ok(t.abs(v[0])), &[&[3, 4]]);
}

#[test]
fn row_normalizations() {
    check("softmax", |t, v| Ok(t.softmax_rows(v[0])), &[&[3, 5]]);
    check("layer_norm", |t, v| Ok(t.layer_norm_rows(v[0], 1e-5)), &[&[3, 6]]);
    check("minmax", |t, v| Ok(t.minmax_rows(v[0])), &[&[3, 6]]);
    check(
        "normalize_all",
        |t, v| {
            let s = t.softmax_rows(v[0]);
            let p = t.affine(s, 1.0, 0.5);
            Ok(t.normalize_all(p))
        },
        &[&[4, 1]],
    );
}

#[test]
fn reductions() {
    check("mean_rows", |t, v| Ok(t.mean_rows(v[0])), &[&[4, 3]]);
    check("sum_cols", |t, v| Ok(t.sum_cols(v[0])), &[&[4, 3]]);
    check("mean_all", |t, v| Ok(t.mean_all(v[0])), &[&[4, 3]]);
}

#[test]
fn indexing() {
    check("gather", |t, v| t.gather_rows(v[0], &[2, 0, 2, 3]), &[&[4, 3]]);
    check("scatter", |t, v| t.scatter_rows(v[0], v[1], &[4, 1], 6), &[&[2, 3], &[1, 3]]);
    check("concat_rows", |t, v| t.concat_rows(&[v[0], v[1]]), &[&[2, 3], &[1, 3]]);
    check("concat_cols", |t, v| t.concat_cols(&[v[0], v[1]]), &[&[2, 3], &[2, 1]]);
    check("slice_cols", |t, v| t.slice_cols(v[0], 1, 2), &[&[3, 4]]);
    check("reshape", |t, v| t.reshape(v[0], 2, 6), &[&[3, 4]]);
}

#[test]
fn negative_log_likelihood() {
    check(
        "nll",
        |t, v| {
            let p = t.softmax_rows(v[0]);
            t.nll(p, 2)
        },
        &[&[1, 4]],
    );
}

#[test]
fn composed_attention_like_chain() {
    check(
        "attention",
        |t, v| {
            let kt = t.transpose(v[1]);
            let s = t.matmul(v[0], kt)?;
            let a = t.softmax_rows(s);
            let ctx = t.matmul(a, v[2])?;
            let n = t.layer_norm_rows(ctx, 1e-5);
            Ok(t.gelu(n))
        },
        &[&[3, 4], &[3, 4], &[3, 2]],
    );
}
