//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any fails. Pass criterion numbers as arguments to
//! run a subset, e.g. `cargo test --test acceptance -- 3 8`.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::Value;

use romkit::coupled::{eigenvalues, spectrum_union, CoupledEnsemble};
use romkit::kernel::gram;
use romkit::piston::{integrate, PistonParams, PistonState};
use romkit::spectral::{
    cholesky_factor, eigendecompose, kl_expand, method_of_snapshots, sqrt_factor, unitary_equivalence,
    Factorization,
};
use romkit::structured::{
    decode_field, encode_field, rotation_log, sample_distances, skew_exp, sym_exp, sym_log, tensor_correlation,
    tensor_kernel, vector_correlation, vector_kernel, LieAlgebra, Manifold, MatrixFieldEnsemble,
    VectorFieldEnsemble,
};
use romkit::tensor::{split, tensorize, tt_reconstruct, tt_svd, SnapshotTensor};
use romkit::{ParameterPoint, RkhsFunction, SampledMeasure, SnapshotEnsemble, Truncation};

/// Failure description; anything displayable converts into it so `?`
/// works on library and I/O errors alike.
struct Fail(String);

impl<E: std::fmt::Display> From<E> for Fail {
    fn from(e: E) -> Self {
        Fail(e.to_string())
    }
}

type Outcome = Result<String, Fail>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), Fail> {
    if ok {
        Ok(())
    } else {
        Err(Fail(msg()))
    }
}

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

fn weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.05..3.0)).collect()
}

/// Random snapshot matrix with d, N <= 64: full Gaussian, low rank, or
/// with graded column scales.
fn random_data(rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let d = rng.random_range(1..=64);
    let n = rng.random_range(1..=64);
    match rng.random_range(0..3) {
        0 => gaussian(rng, d, n),
        1 => {
            let r = rng.random_range(1..=d.min(n));
            gaussian(rng, d, r) * gaussian(rng, r, n)
        }
        _ => {
            let mut a = gaussian(rng, d, n);
            for j in 0..n {
                let s = 10f64.powf(rng.random_range(-3.0..1.0));
                a.column_mut(j).scale_mut(s);
            }
            a
        }
    }
}

fn random_ensemble(rng: &mut ChaCha8Rng) -> SnapshotEnsemble {
    let a = random_data(rng);
    let w = weights(rng, a.ncols());
    SnapshotEnsemble::new(a, SampledMeasure::from_weights(w).unwrap()).unwrap()
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let qr = gaussian(rng, n, n).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `A W A^T` built directly from the definition.
fn oracle_correlation(a: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(a.nrows(), a.nrows());
    for (j, &wj) in w.iter().enumerate() {
        let col = a.column(j);
        c += col * col.transpose() * wj;
    }
    c
}

fn sorted_eigs(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Largest deviation between two spectra relative to the largest
/// eigenvalue; entries beyond the shorter list must vanish.
fn spectrum_gap(a: &[f64], b: &[f64]) -> f64 {
    let top = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    if top == 0.0 {
        return 0.0;
    }
    let k = a.len().min(b.len());
    let paired = a.iter().zip(b).map(|(x, y)| (x - y).abs());
    let rest = a[k..].iter().chain(&b[k..]).map(|x| x.abs());
    paired.chain(rest).fold(0.0, f64::max) / top
}

/// Weighted squared error of projecting every snapshot onto `span(q)`.
fn projection_error(ens: &SnapshotEnsemble, q: &DMatrix<f64>) -> f64 {
    let mut err = 0.0;
    for (i, &w) in ens.weights().iter().enumerate() {
        let r = ens.data().column(i);
        let coeff = q.transpose() * r;
        err += w * (r - q * coeff).norm_squared();
    }
    err
}

// Tail energies below this fraction of the total are compared absolutely.
const FLOOR: f64 = 1e-14;

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    let mut worst_margin = f64::INFINITY;
    for inst in 0..50 {
        let ens = random_ensemble(&mut rng);
        let kl = kl_expand(&ens);
        let lam = kl.eigenvalues();
        let total = ens.energy();
        let k = ens.state_dim().min(ens.num_samples());
        for n in 0..=k {
            let tail: f64 = lam.iter().skip(n).rev().sum();
            let modes = kl.spatial_modes().columns(0, n.min(kl.rank())).into_owned();
            let measured = projection_error(&ens, &modes);
            let via_expansion = kl.truncate(Truncation::Rank(n.min(kl.rank())))?.weighted_error(&ens)?;
            let scale = tail.max(FLOOR * total);
            let gap = ((measured - tail).abs() / scale).max((via_expansion - tail).abs() / scale);
            worst = worst.max(gap);
            check(gap <= 1e-10, || format!("instance {inst}, n = {n}: relative gap {gap:e}"))?;
            // No random rank-n subspace beats the optimum.
            if n > 0 && n <= kl.rank() {
                let q = (gaussian(&mut rng, ens.state_dim(), n)).qr().q();
                let margin = (projection_error(&ens, &q) - tail) / scale;
                worst_margin = worst_margin.min(margin);
                check(margin >= -1e-10, || format!("instance {inst}, n = {n}: competitor beats optimum"))?;
            }
        }
    }
    Ok(format!("max relative gap {worst:.2e}, min competitor margin {worst_margin:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let mut worst = 0.0f64;
    for inst in 0..50 {
        let ens = random_ensemble(&mut rng);
        let (a, w) = (ens.data(), ens.weights());
        let sw = DMatrix::from_diagonal(&DVector::from_iterator(w.len(), w.iter().map(|x| x.sqrt())));
        let oracle_u = sorted_eigs(&oracle_correlation(a, w));
        let oracle_q = sorted_eigs(&(&sw * a.transpose() * a * &sw));
        let lib_u = eigendecompose(&ens.correlation())?.eigenvalues;
        let lib_q = method_of_snapshots(&gram(&ens), ens.measure())?.eigenvalues;
        let gap = spectrum_gap(&lib_u, &lib_q)
            .max(spectrum_gap(&lib_u, &oracle_u))
            .max(spectrum_gap(&lib_q, &oracle_q))
            .max(spectrum_gap(&oracle_u, &oracle_q));
        worst = worst.max(gap);
        check(gap <= 1e-10, || format!("instance {inst}: spectra differ by {gap:e}"))?;
    }
    Ok(format!("max relative spectrum gap {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let mut worst = 0.0f64;
    for inst in 0..50 {
        let ens = random_ensemble(&mut rng);
        let g = gram(&ens);
        let n = ens.num_samples();
        let coeffs = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let direct = (ens.data() * &coeffs).norm_squared();
        let phi = RkhsFunction::new(coeffs.clone());
        let via_kernel = g.inner(&phi, &phi)?;
        let rel = (direct - via_kernel).abs() / direct.max(via_kernel).max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
        check(rel <= 1e-12, || format!("instance {inst}: isometry defect {rel:e}"))?;
        let values = g.evaluate(&phi)?;
        let oracle = ens.data().transpose() * (ens.data() * &coeffs);
        for j in 0..n {
            let reproduced = g.reproduce(j, &phi)?;
            check(reproduced == values[j], || format!("instance {inst}: reproduction not exact at {j}"))?;
            let dev = (reproduced - oracle[j]).abs() / oracle.amax().max(f64::MIN_POSITIVE);
            check(dev <= 1e-12, || format!("instance {inst}: evaluation off by {dev:e}"))?;
        }
    }
    Ok(format!("max isometry defect {worst:.2e}; reproduction exact"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let (mut mismatch, mut ortho, mut planted) = (0.0f64, 0.0f64, 0.0f64);
    for inst in 0..50 {
        let d = rng.random_range(1..=64);
        let n = d + rng.random_range(1..=16);
        let a = gaussian(&mut rng, d, n);
        let ens = SnapshotEnsemble::new(a, SampledMeasure::from_weights(weights(&mut rng, n)).unwrap()).unwrap();
        let c = ens.correlation();
        let b1 = cholesky_factor(&c)?;
        let b2 = sqrt_factor(&c)?;
        let x = unitary_equivalence(&b1, &b2)?;
        let m = (&b2.factor - &x * &b1.factor).norm() / b2.factor.norm();
        let o = (x.transpose() * &x - DMatrix::identity(x.ncols(), x.ncols())).norm();
        mismatch = mismatch.max(m);
        ortho = ortho.max(o);
        check(m <= 1e-8, || format!("instance {inst}: factor mismatch {m:e}"))?;
        check(o <= 1e-10, || format!("instance {inst}: X not orthogonal ({o:e})"))?;

        let q = random_orthogonal(&mut rng, d);
        let rotated = Factorization { factor: &q * &b2.factor };
        let recovered = unitary_equivalence(&b2, &rotated)?;
        let p = (&recovered - &q).norm();
        planted = planted.max(p);
        check(p <= 1e-9, || format!("instance {inst}: planted rotation off by {p:e}"))?;
    }
    Ok(format!(
        "max mismatch {mismatch:.2e}, max |X^T X - I| {ortho:.2e}, planted recovery {planted:.2e}"
    ))
}

/// exp(X) by Taylor series with scaling and squaring, used as an oracle.
fn taylor_expm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let norm = x.norm();
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as i32 } else { 0 };
    let y = x / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &y / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

fn scaled_to_norm(m: DMatrix<f64>, target: f64) -> DMatrix<f64> {
    let s = m.clone().svd(false, false).singular_values.max();
    if s == 0.0 {
        m
    } else {
        m * (target / s)
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let (mut sym_rt, mut skew_rt, mut orth, mut oracle) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for inst in 0..200 {
        let n = rng.random_range(1..=8);
        let g = gaussian(&mut rng, n, n);
        let radius = rng.random_range(0.0..2.0);
        let h = scaled_to_norm((&g + g.transpose()) * 0.5, radius);
        let a = sym_exp(&h)?;
        oracle = oracle.max((&a - taylor_expm(&h)).norm() / a.norm());
        let e = (sym_log(&a)? - &h).norm();
        sym_rt = sym_rt.max(e);
        check(e <= 1e-9, || format!("matrix {inst}: sym roundtrip {e:e}"))?;
        let back = (sym_exp(&sym_log(&a)?)? - &a).norm() / a.norm();
        check(back <= 1e-9, || format!("matrix {inst}: SPD roundtrip {back:e}"))?;

        if n >= 2 {
            let s = scaled_to_norm((&g - g.transpose()) * 0.5, radius);
            let q = skew_exp(&s)?;
            oracle = oracle.max((&q - taylor_expm(&s)).norm());
            let o = (q.transpose() * &q - DMatrix::identity(n, n)).norm().max((q.determinant() - 1.0).abs());
            orth = orth.max(o);
            check(o <= 1e-8, || format!("matrix {inst}: skew_exp not a rotation ({o:e})"))?;
            let e = (rotation_log(&q)? - &s).norm();
            skew_rt = skew_rt.max(e);
            check(e <= 1e-8, || format!("matrix {inst}: skew roundtrip {e:e}"))?;
        }
    }
    check(oracle <= 1e-12, || format!("exp differs from the series oracle by {oracle:e}"))?;

    let mut field_rt = 0.0f64;
    for inst in 0..10 {
        let n = rng.random_range(1..=8);
        let count = rng.random_range(1..=24);
        let samples: Vec<DMatrix<f64>> = (0..count)
            .map(|_| {
                let g = gaussian(&mut rng, n, n);
                let h = scaled_to_norm((&g + g.transpose()) * 0.5, 2.0);
                taylor_expm(&h)
            })
            .map(|a| (&a + a.transpose()) * 0.5)
            .collect();
        let measure = SampledMeasure::from_weights(weights(&mut rng, count)).unwrap();
        let field = MatrixFieldEnsemble::new(samples, Manifold::Spd, measure)?;
        let encoded = encode_field(&field)?;
        let kl = kl_expand(&encoded);
        let reduced = SnapshotEnsemble::new(kl.reconstruct_all(), encoded.measure().clone())?;
        let decoded = decode_field(&reduced, Manifold::Spd)?;
        let worst = sample_distances(&field, &decoded)?.into_iter().fold(0.0, f64::max);
        field_rt = field_rt.max(worst);
        check(worst <= 1e-8, || format!("field {inst}: roundtrip {worst:e}"))?;
    }
    Ok(format!(
        "sym {sym_rt:.1e}, skew {skew_rt:.1e}, rotation defect {orth:.1e}, series oracle {oracle:.1e}, field {field_rt:.1e}"
    ))
}

fn components(rng: &mut ChaCha8Rng, k: usize, d: usize, n: usize) -> Vec<SnapshotEnsemble> {
    let measure = SampledMeasure::from_weights(weights(rng, n)).unwrap();
    (0..k)
        .map(|_| SnapshotEnsemble::new(gaussian(rng, d, n), measure.clone()).unwrap())
        .collect()
}

fn algebra_basis(rng: &mut ChaCha8Rng, algebra: LieAlgebra, n: usize) -> DMatrix<f64> {
    let g = gaussian(rng, n, n);
    match algebra {
        LieAlgebra::Skew => (&g - g.transpose()) * 0.5,
        _ => (&g + g.transpose()) * 0.5,
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let (mut assembly, mut psd) = (0.0f64, 0.0f64);
    for inst in 0..50 {
        let k = rng.random_range(1..=4);
        let d = rng.random_range(1..=10);
        let n = rng.random_range(1..=10);
        let comps = components(&mut rng, k, d, n);
        let w = comps[0].weights().to_vec();

        // Vector-valued: F_i = sum_k r_k(mu_i) f_k^T (d x e).
        let e = rng.random_range(1..=4);
        let frame: Vec<DVector<f64>> = (0..k).map(|_| DVector::from_fn(e, |_, _| rng.sample(StandardNormal))).collect();
        let f: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                let mut m = DMatrix::zeros(d, e);
                for (c, fr) in comps.iter().zip(&frame) {
                    m += c.data().column(i) * fr.transpose();
                }
                m
            })
            .collect();
        let vfe = VectorFieldEnsemble::new(comps.clone(), frame)?;
        let kernel = vector_kernel(&vfe);
        let oracle_k = DMatrix::from_fn(n * e, n * e, |r, c| f[r / e].column(r % e).dot(&f[c / e].column(c % e)));
        let gap_k = (kernel.assembled() - &oracle_k).amax() / oracle_k.amax().max(f64::MIN_POSITIVE);
        let mut oracle_c = DMatrix::zeros(d * e, d * e);
        for i in 0..n {
            let v = DVector::from_fn(d * e, |r, _| f[i][(r / e, r % e)]);
            oracle_c += &v * v.transpose() * w[i];
        }
        let corr = vector_correlation(&vfe);
        let gap_c = (corr.entries() - &oracle_c).amax() / oracle_c.amax().max(f64::MIN_POSITIVE);

        // Matrix-valued: T_i = sum_k r_k(mu_i) (x) R_k as a (d*m) x m map.
        let algebra = if rng.random_bool(0.5) { LieAlgebra::Symmetric } else { LieAlgebra::Skew };
        let m = rng.random_range(2..=4);
        let maps: Vec<DMatrix<f64>> = (0..k).map(|_| algebra_basis(&mut rng, algebra, m)).collect();
        let t: Vec<DMatrix<f64>> = (0..n)
            .map(|i| {
                DMatrix::from_fn(d * m, m, |r, x| {
                    comps.iter().zip(&maps).map(|(c, rk)| c.data()[(r / m, i)] * rk[(r % m, x)]).sum()
                })
            })
            .collect();
        let tk = tensor_kernel(&comps, &maps, algebra)?;
        let oracle_tk = DMatrix::from_fn(n * m, n * m, |r, c| t[r / m].column(r % m).dot(&t[c / m].column(c % m)));
        let gap_tk = (tk.assembled() - &oracle_tk).amax() / oracle_tk.amax().max(f64::MIN_POSITIVE);
        let mut oracle_tc = DMatrix::zeros(d * m, d * m);
        for i in 0..n {
            oracle_tc += &t[i] * t[i].transpose() * w[i];
        }
        let tc = tensor_correlation(&comps, &maps, algebra)?;
        let gap_tc = (tc.entries() - &oracle_tc).amax() / oracle_tc.amax().max(f64::MIN_POSITIVE);

        let gap = gap_k.max(gap_c).max(gap_tk).max(gap_tc);
        assembly = assembly.max(gap);
        check(gap <= 1e-12, || format!("instance {inst}: assembly differs from oracle by {gap:e}"))?;

        for block in [&kernel, &tk] {
            let (lo, hi) = block.eigen_range();
            let rel = if hi > 0.0 { lo / hi } else { 0.0 };
            psd = psd.min(rel);
            check(lo >= -1e-10 * hi.max(0.0), || format!("instance {inst}: kernel eigenvalue {lo:e} vs max {hi:e}"))?;
        }
    }
    Ok(format!("max assembly gap {assembly:.2e}, min lambda_min/lambda_max {psd:.2e}"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1007);
    let (mut union_gap, mut additivity) = (0.0f64, 0.0f64);
    for inst in 0..50 {
        let n = rng.random_range(1..=64);
        let (d1, d2) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let measure = SampledMeasure::from_weights(weights(&mut rng, n)).unwrap();
        let a1 = gaussian(&mut rng, d1, n);
        let a2 = gaussian(&mut rng, d2, n);
        let (s1, s2) = (rng.random_range(0.1..3.0), rng.random_range(0.1..3.0));
        let ce = CoupledEnsemble::new(
            SnapshotEnsemble::new(a1.clone(), measure.clone())?,
            SnapshotEnsemble::new(a2.clone(), measure.clone())?,
        )?
        .with_scales(s1, s2)?;

        let oracle1 = oracle_correlation(&a1, measure.weights()) * s1;
        let oracle2 = oracle_correlation(&a2, measure.weights()) * s2;
        let oracle_union = spectrum_union(&sorted_eigs(&oracle1), &sorted_eigs(&oracle2));
        let coupling = eigenvalues(&ce.coupling_correlation());
        let gap = spectrum_gap(&coupling, &oracle_union);
        union_gap = union_gap.max(gap);
        check(gap <= 1e-10, || format!("instance {inst}: union spectrum off by {gap:e}"))?;

        let dense = ce.coupling_correlation();
        for _ in 0..5 {
            let mut v = |k: usize| DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let (u1, u2, v1, v2) = (v(d1), v(d2), v(d1), v(d2));
            let u = DVector::from_iterator(d1 + d2, u1.iter().chain(u2.iter()).copied());
            let w = DVector::from_iterator(d1 + d2, v1.iter().chain(v2.iter()).copied());
            let blocks = u1.dot(&(&oracle1 * &v1)) + u2.dot(&(&oracle2 * &v2));
            let lib = ce.coupled_bilinear((&u1, &u2), (&v1, &v2))?;
            let scale = (dense.bilinear(&u, &u) * dense.bilinear(&w, &w)).sqrt();
            let gap = ((dense.bilinear(&u, &w) - blocks).abs()).max((lib - blocks).abs()) / scale;
            additivity = additivity.max(gap);
            check(gap <= 1e-12, || format!("instance {inst}: block additivity off by {gap:e}"))?;
        }
    }

    // Grid instances: subsystem j depends only on parameter group j.
    let mut fibre = 0.0f64;
    for inst in 0..10 {
        let (n1, n2) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let (d1, d2) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let (x1, x2) = (gaussian(&mut rng, d1, n1), gaussian(&mut rng, d2, n2));
        let (w1, w2) = (weights(&mut rng, n1), weights(&mut rng, n2));
        let mut points = Vec::new();
        let mut w = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                points.push(ParameterPoint::new(vec![i as f64 * 0.5, -(j as f64)]));
                w.push(w1[i] * w2[j]);
            }
        }
        let measure = SampledMeasure::new(points, w)?;
        let a1 = DMatrix::from_fn(d1, n1 * n2, |r, c| x1[(r, c / n2)]);
        let a2 = DMatrix::from_fn(d2, n1 * n2, |r, c| x2[(r, c % n2)]);
        let ce = CoupledEnsemble::new(SnapshotEnsemble::new(a1, measure.clone())?, SnapshotEnsemble::new(a2, measure)?)?
            .with_partition(vec![0], vec![1])?;
        let grid = ce.partition().expect("partition attached");
        check(grid.n1 == n1 && grid.n2 == n2, || format!("grid {inst}: detected {}x{}", grid.n1, grid.n2))?;
        let kernel = ce.coupled_kernel();
        let (v1, v2) = kernel.fibre_variation(grid);
        let rel = (v1 / kernel.diag1.amax().max(f64::MIN_POSITIVE)).max(v2 / kernel.diag2.amax().max(f64::MIN_POSITIVE));
        fibre = fibre.max(rel);
        check(rel <= 1e-12, || format!("grid {inst}: fibre variation {rel:e}"))?;
        let reduced = kernel.reduced_diag1(grid);
        let oracle = x1.transpose() * &x1;
        let gap = (reduced - &oracle).amax() / oracle.amax().max(f64::MIN_POSITIVE);
        check(gap <= 1e-12, || format!("grid {inst}: reduced kernel off by {gap:e}"))?;
    }
    Ok(format!(
        "union gap {union_gap:.2e}, additivity {additivity:.2e}, fibre variation {fibre:.2e}"
    ))
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let (mut slack, mut exact) = (f64::INFINITY, 0.0f64);
    for inst in 0..50 {
        let order = rng.random_range(3..=4);
        let shape: Vec<usize> = (0..order).map(|_| rng.random_range(1..=6)).collect();
        let size: usize = shape.iter().product();
        let data: Vec<f64> = (0..size).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<Vec<f64>> = shape[1..].iter().map(|&n| weights(&mut rng, n)).collect();
        let t = SnapshotTensor::with_weights(shape.clone(), data, w)?;
        let norm = t.weighted_norm();

        let eps = rng.random_range(0.0..0.6) * norm;
        let cap = rng.random_bool(0.3).then(|| rng.random_range(1..=3));
        let tt = tt_svd(&t, eps, cap)?;
        let err = t.weighted_distance(&tt_reconstruct(&tt)?)?;
        let bound = tt.error_bound();
        slack = slack.min(bound - err);
        check(err <= bound * (1.0 + 1e-10) + 1e-13 * norm, || {
            format!("tensor {inst} {shape:?}: error {err:e} above bound {bound:e}")
        })?;
        if cap.is_none() {
            check(bound <= eps * (1.0 + 1e-12), || format!("tensor {inst}: bound {bound:e} exceeds eps {eps:e}"))?;
        }

        let full = tt_svd(&t, 0.0, None)?;
        let e0 = t.weighted_distance(&tt_reconstruct(&full)?)? / norm;
        exact = exact.max(e0);
        check(e0 <= 1e-10, || format!("tensor {inst}: eps = 0 reconstruction off by {e0:e}"))?;
    }

    let mut order_two = 0.0f64;
    for inst in 0..20 {
        let ens = random_ensemble(&mut rng);
        let t = tensorize(&ens, &[ens.num_samples()])?;
        let kl = kl_expand(&ens);
        let top = kl.singular_values().first().copied().unwrap_or(1.0);
        let tt = tt_svd(&t, 0.0, None)?;
        let sp = split(&t, &[], &[1], 0.0)?;
        for (i, s) in sp.all_singular_values.iter().enumerate() {
            let reference = kl.singular_values().get(i).copied().unwrap_or(0.0);
            let tt_value = tt.singular_values[0].get(i).copied().unwrap_or(0.0);
            let gap = (s - reference).abs().max((tt_value - reference).abs()) / top;
            order_two = order_two.max(gap);
            check(gap <= 1e-10, || format!("order-2 instance {inst}: sigma_{i} off by {gap:e}"))?;
        }
    }
    Ok(format!(
        "min bound slack {slack:.2e}, eps=0 error {exact:.2e}, order-2 sigma gap {order_two:.2e}"
    ))
}

fn romkit(args: &[&str]) -> Result<i32, Fail> {
    let out = Command::new(env!("CARGO_BIN_EXE_romkit"))
        .args(args)
        .output()
        .map_err(|e| Fail(format!("cannot run romkit: {e}")))?;
    if out.status.code() == Some(1) {
        return Err(Fail(format!("romkit {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))));
    }
    Ok(out.status.code().unwrap_or(-1))
}

fn read_report(dir: &Path) -> Result<Value, Fail> {
    let text = fs::read_to_string(dir.join("report.json"))?;
    Ok(serde_json::from_str(&text)?)
}

fn audit_passed(report: &Value, name: &str) -> bool {
    report["audits"]
        .as_array()
        .map(|a| a.iter().any(|x| x["name"] == name && x["passed"] == true))
        .unwrap_or(false)
}

const SCENARIO: &str = r#"{
  "base": {"m": 1.0, "k": 1.0, "S": 0.1, "c0": 10.0, "gamma_minus_1": 0.4},
  "p0": 1.0,
  "grid": {"ranges": [
    {"name": "k", "min": 0.5, "max": 2.0, "count": 3},
    {"name": "c0", "min": 5.0, "max": 15.0, "count": 3}
  ]},
  "s0": [1.0, 0.0],
  "T": 20.0,
  "dt": 0.001,
  "stride": 100
}"#;

fn criterion_9() -> Outcome {
    let p = PistonParams::default();
    let rest = integrate(&p, PistonState::default(), 10.0, 1e-3)?;
    check(rest.len() == 10_001, || "expected 10^4 steps".to_string())?;
    let drift = rest.states.iter().map(|s| s.w.abs().max(s.v.abs())).fold(0.0, f64::max);
    check(drift <= 1e-12, || format!("equilibrium drifted by {drift:e}"))?;

    let free = PistonParams { s: 0.0, ..p };
    let traj = integrate(&free, PistonState::new(1.0, 0.0), 20.0, 1e-3)?;
    let harmonic = traj.times.iter().zip(&traj.states).map(|(t, s)| (s.w - t.cos()).abs()).fold(0.0, f64::max);
    check(harmonic <= 1e-6, || format!("harmonic error {harmonic:e}"))?;

    let s0 = PistonState::new(1.0, 0.0);
    let (t_end, dt) = (4.0, 0.08);
    let end = |h: f64| integrate(&p, s0, t_end, h).map(|t| t.last());
    let reference = end(dt / 16.0)?;
    let dist = |s: PistonState| ((s.w - reference.w).powi(2) + (s.v - reference.v).powi(2)).sqrt();
    let order = (dist(end(dt)?) / dist(end(dt / 2.0)?)).log2();
    check((3.7..=4.3).contains(&order), || format!("observed RK4 order {order}"))?;

    let dir = tempfile::tempdir()?;
    let cfg = dir.path().join("scenario.json");
    fs::write(&cfg, SCENARIO)?;
    let sim = dir.path().join("sim");
    let (cfg_s, sim_s) = (cfg.to_str().unwrap(), sim.to_str().unwrap());
    check(romkit(&["simulate", "--config", cfg_s, "--out", sim_s])? == 0, || "simulate audits failed".to_string())?;
    let coupled = dir.path().join("coupled");
    let manifest = sim.join("manifest.json");
    let code = romkit(&[
        "coupled",
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        coupled.to_str().unwrap(),
        "--seed",
        "9",
    ])?;
    check(code == 0, || format!("coupled exited with {code}"))?;
    let report = read_report(&coupled)?;
    for name in [
        "solid.truncation_identity",
        "gas.truncation_identity",
        "solid.eckart_young",
        "gas.eckart_young",
        "solid.spectrum_duality",
        "gas.spectrum_duality",
        "coupling.spectrum_union",
        "coupling.block_additivity",
        "coupling.joint_truncation",
    ] {
        check(audit_passed(&report, name), || format!("audit {name} missing or failed"))?;
    }
    // Re-check the reported truncation tables at the criterion tolerance.
    let mut worst = 0.0f64;
    for sub in report["result"]["subsystems"].as_array().unwrap() {
        let total = sub["pod"]["total_energy"].as_f64().unwrap();
        for row in sub["pod"]["truncation"].as_array().unwrap() {
            let (p, m) = (row["predicted"].as_f64().unwrap(), row["measured"].as_f64().unwrap());
            worst = worst.max((m - p).abs() / p.max(FLOOR * total));
        }
    }
    check(worst <= 1e-10, || format!("reported truncation gap {worst:e}"))?;
    Ok(format!(
        "equilibrium {drift:.1e}, harmonic {harmonic:.1e}, order {order:.3}, CLI exit 0 with table gap {worst:.1e}"
    ))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir()?;
    let d = dir.path();
    fs::write(d.join("scenario.json"), SCENARIO.replace("\"T\": 20.0", "\"T\": 5.0"))?;
    fs::write(
        d.join("pod.json"),
        r#"{"snapshots": "sim/gas.csv", "params": "sim/params.csv", "weights_column": true, "truncation": {"energy": 1e-3}}"#,
    )
    ?;
    fs::write(
        d.join("tensor.json"),
        r#"{"snapshots": "sim/solid.csv", "params": "sim/params.csv", "weights_column": true, "grid": [3, 3], "eps": 1e-3, "splits": [{"left": [2], "right": [1]}]}"#,
    )
    ?;
    fs::write(d.join("field.csv"), "2,0.5,0.5,1\n1,0.2,0.2,3\n0.5,0,0,0.25\n")?;
    fs::write(d.join("field.json"), r#"{"samples": "field.csv", "n": 2, "manifold": "SPD"}"#)?;

    let path = |p: &str| d.join(p).to_str().unwrap().to_string();
    let runs: [(&str, String, &str); 5] = [
        ("simulate", path("scenario.json"), "sim"),
        ("coupled", path("sim/manifest.json"), "coupled"),
        ("pod", path("pod.json"), "pod"),
        ("tensor", path("tensor.json"), "tensor"),
        ("matrix-field", path("field.json"), "field"),
    ];
    let mut compared = 0;
    for (cmd, cfg, out) in &runs {
        let first = path(out);
        let second = path(&format!("{out}_again"));
        for target in [&first, &second] {
            let code = romkit(&[cmd, "--config", cfg, "--out", target, "--seed", "42"])?;
            check(code == 0, || format!("{cmd} exited with {code}"))?;
        }
        let mut names: Vec<String> = fs::read_dir(&first)
            ?
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n != "timing.json")
            .collect();
        names.sort();
        for name in names {
            let a = fs::read(Path::new(&first).join(&name))?;
            let b = fs::read(Path::new(&second).join(&name))?;
            check(a == b, || format!("{cmd}: {name} differs between runs"))?;
            compared += 1;
        }
    }
    Ok(format!("{compared} output files byte-identical across 5 commands"))
}

type Criterion = fn() -> Outcome;

const CRITERIA: [(&str, Criterion); 10] = [
    ("truncation error equals tail energy (Eckart-Young)", criterion_1),
    ("spectrum duality of correlation and weighted Gram", criterion_2),
    ("RKHS isometry and exact reproduction", criterion_3),
    ("unitary equivalence of Cholesky and square-root factors", criterion_4),
    ("symmetric/skew exp-log roundtrips and SPD field roundtrip", criterion_5),
    ("vector and tensor block kernels match flattened oracles", criterion_6),
    ("coupled spectrum union, block additivity, fibre constancy", criterion_7),
    ("TT-SVD error bound, exactness and order-2 agreement", criterion_8),
    ("piston invariants and simulated coupled pipeline via CLI", criterion_9),
    ("byte-identical reports across repeated CLI runs", criterion_10),
];

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (title, run)) in CRITERIA.iter().enumerate() {
        let id = i + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err(Fail("panicked".into())));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2}: PASS  {title} ({detail}; {secs:.1}s)"),
            Err(Fail(why)) => {
                failed += 1;
                println!("criterion {id:>2}: FAIL  {title} ({why}; {secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
