//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use pnp_sgs::checkpoint::write_checkpoint;
use pnp_sgs::npy::{self, NpyArray, NpyData};
use pnp_sgs::protocol::Request;
use pnp_sgs::sampler::inpaint_covariance_diagonal;
use pnp_sgs::{
    estimate_sigma, forward_diffuse, mmse, psnr, run_sampler, sample_sr_x, sample_sr_z1, sample_x_deblur,
    sample_x_inpaint, Chain, CirculantOperator, ConvolutionKernel, Coupling, ExternalDenoiser,
    GaussianConjugateDenoiser, Image, MaskOperator, Measurement, NoiseModel, SamplerConfig, Schedule, Shape, TaskSpec,
};
use pnp_sgs_oracle::nalgebra::{DMatrix, DVector};
use pnp_sgs_oracle::{circulant_matrix, inpaint_chain_law, mask_matrix, max_z, Gaussian, Moments};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1. SMW closed-form diagonal vs dense inverse

fn smw_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (h, w) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let fraction = rng.random_range(0.0..1.0);
        let sigma = 10f64.powf(rng.random_range(-3.0..0.3));
        let rho = 10f64.powf(rng.random_range(-2.0..0.5));
        let mask = MaskOperator::random(h, w, fraction, &mut rng).map_err(|e| e.to_string())?;
        let n = h * w;
        let m = mask_matrix(mask.kept_indices(), n);
        let q = m.transpose() * &m / (sigma * sigma) + DMatrix::identity(n, n) / (rho * rho);
        let cov = q.try_inverse().ok_or("dense precision not invertible")?;
        let diag = inpaint_covariance_diagonal(&mask, sigma, rho).map_err(|e| e.to_string())?;
        for k in 0..n {
            worst = worst.max((diag[k] - cov[(k, k)]).abs());
        }
    }
    ensure(worst <= 1e-10, || format!("max deviation {worst:.3e} > 1e-10"))?;
    Ok(format!("200 triples, max |diff| = {worst:.2e}"))
}

// 2. Exact Gaussian x-steps against dense oracles

const SIDE: usize = 8;
const PIXELS: usize = SIDE * SIDE;
const DRAWS: usize = 20_000;

fn unit_image(rng: &mut ChaCha8Rng) -> Image {
    Image::from_fn(Shape::new(1, SIDE, SIDE), |_, _, _| rng.random_range(0.0..1.0))
}

fn vector(x: &Image) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

fn moment_check(
    label: &str,
    oracle: &Gaussian,
    mut draw: impl FnMut(&mut dyn RngCore) -> pnp_sgs::Result<Image>,
) -> Result<(f64, f64), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut m = Moments::new(PIXELS);
    for _ in 0..DRAWS {
        m.push(draw(&mut rng).map_err(|e| format!("{label}: {e}"))?.as_slice());
    }
    let mean: Vec<f64> = oracle.mean.iter().copied().collect();
    let var: Vec<f64> = oracle.variances().iter().copied().collect();
    let zm = max_z(m.mean(), &mean, &m.mean_se());
    let zv = max_z(&m.variance(), &var, &m.variance_se());
    ensure(zm < 4.0 && zv < 4.0, || {
        format!("{label}: mean {zm:.2} SE, variance {zv:.2} SE")
    })?;
    Ok((zm, zv))
}

fn exact_x_steps() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kernel = ConvolutionKernel::gaussian(3, 0.8).map_err(|e| e.to_string())?;
    let blur = CirculantOperator::from_kernel(&kernel, SIDE, SIDE).map_err(|e| e.to_string())?;
    let bm = circulant_matrix(kernel.taps(), 3, 3, SIDE, SIDE);
    let eye = DMatrix::<f64>::identity(PIXELS, PIXELS);
    let mut worst = (0.0f64, 0.0f64);
    let mut track = |r: (f64, f64)| {
        worst = (worst.0.max(r.0), worst.1.max(r.1));
    };

    // deblurring, scalar and per-pixel noise
    let (y, z) = (unit_image(&mut rng), unit_image(&mut rng));
    let (sigma, rho) = (0.1, 0.7);
    let q = bm.transpose() * &bm / (sigma * sigma) + &eye / (rho * rho);
    let b = bm.transpose() * vector(&y) / (sigma * sigma) + vector(&z) / (rho * rho);
    let noise = NoiseModel::scalar(sigma).map_err(|e| e.to_string())?;
    track(moment_check("deblur/scalar", &Gaussian::from_precision(&q, &b), |r| {
        sample_x_deblur(&y, &z, &blur, &noise, rho, r)
    })?);

    let variances: Vec<f64> = (0..PIXELS).map(|_| rng.random_range(0.005..0.05)).collect();
    let omega = DMatrix::from_diagonal(&DVector::from_iterator(PIXELS, variances.iter().map(|v| 1.0 / v)));
    let q = bm.transpose() * &omega * &bm + &eye / (rho * rho);
    let b = bm.transpose() * &omega * vector(&y) + vector(&z) / (rho * rho);
    let noise = NoiseModel::diagonal(variances).map_err(|e| e.to_string())?;
    track(moment_check("deblur/diagonal", &Gaussian::from_precision(&q, &b), |r| {
        sample_x_deblur(&y, &z, &blur, &noise, rho, r)
    })?);

    // inpainting
    let mask = MaskOperator::random(SIDE, SIDE, 0.6, &mut rng).map_err(|e| e.to_string())?;
    let obs = Measurement::new(1, (0..mask.kept_len()).map(|_| rng.random_range(0.0..1.0)).collect());
    let (sigma, rho) = (0.2, 0.7);
    let m = mask_matrix(mask.kept_indices(), PIXELS);
    let q = m.transpose() * &m / (sigma * sigma) + &eye / (rho * rho);
    let b = m.transpose() * DVector::from_column_slice(obs.values()) / (sigma * sigma) + vector(&z) / (rho * rho);
    track(moment_check("inpaint", &Gaussian::from_precision(&q, &b), |r| {
        sample_x_inpaint(&obs, &z, &mask, sigma, rho, r)
    })?);

    // super-resolution z1, uncoupled and coupled to z2
    let stride = MaskOperator::strided(SIDE, SIDE, 2).map_err(|e| e.to_string())?;
    let ys = Measurement::new(1, (0..stride.kept_len()).map(|_| rng.random_range(0.0..1.0)).collect());
    let (x, z2) = (unit_image(&mut rng), unit_image(&mut rng));
    let (sigma, rho1, rho2) = (0.1, 0.3, 0.6);
    let s = mask_matrix(stride.kept_indices(), PIXELS);
    let ysv = DVector::from_column_slice(ys.values());
    let q = s.transpose() * &s / (sigma * sigma) + &eye / (rho1 * rho1);
    let b = s.transpose() * &ysv / (sigma * sigma) + &bm * vector(&x) / (rho1 * rho1);
    track(moment_check("sr/z1", &Gaussian::from_precision(&q, &b), |r| {
        sample_sr_z1(&ys, &x, &stride, &blur, sigma, rho1, None, r)
    })?);
    let q = q + &eye / (rho2 * rho2);
    let b = b + vector(&z2) / (rho2 * rho2);
    let coupling = Coupling { target: &z2, rho: rho2 };
    track(moment_check("sr/z1 coupled", &Gaussian::from_precision(&q, &b), |r| {
        sample_sr_z1(&ys, &x, &stride, &blur, sigma, rho1, Some(coupling), r)
    })?);

    // super-resolution x, no ridge
    let z1 = unit_image(&mut rng);
    let q = bm.transpose() * &bm / (rho1 * rho1);
    let b = bm.transpose() * vector(&z1) / (rho1 * rho1);
    track(moment_check("sr/x", &Gaussian::from_precision(&q, &b), |r| {
        sample_sr_x(&z1, &blur, rho1, 0.0, r)
    })?);

    Ok(format!(
        "6 samplers x {DRAWS} draws, worst mean {:.2} SE, worst variance {:.2} SE",
        worst.0, worst.1
    ))
}

// 3, 7, 9. Toy inpainting chain with the conjugate denoiser

const TOY_SIDE: usize = 16;
const TOY_SIGMA: f64 = 0.05;
const TOY_TAU2: f64 = 0.05;
const TOY_BURN_IN: usize = 200;
const TOY_SAMPLES: usize = 2000;

struct Toy {
    task: TaskSpec,
    model: GaussianConjugateDenoiser,
    schedule: Schedule,
    prior: Image,
    kept: Vec<usize>,
    y: Vec<f64>,
}

fn toy() -> Result<Toy, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let shape = Shape::new(1, TOY_SIDE, TOY_SIDE);
    let truth = Image::from_fn(shape, |_, i, j| 0.5 + 0.3 * (i as f64 / 3.0).sin() * (j as f64 / 4.0).cos());
    let prior = Image::from_fn(shape, |_, i, j| 0.45 + 0.005 * (i + j) as f64);
    let mask = MaskOperator::random(TOY_SIDE, TOY_SIDE, 0.5, &mut rng).map_err(|e| e.to_string())?;
    let mut y = mask.gather(&truth).map_err(|e| e.to_string())?;
    for v in y.values_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += TOY_SIGMA * e;
    }
    let schedule = Schedule::linear(200, 1e-4, 2e-2).map_err(|e| e.to_string())?;
    let model = GaussianConjugateDenoiser::new(prior.clone(), TOY_TAU2, &schedule).map_err(|e| e.to_string())?;
    Ok(Toy {
        kept: mask.kept_indices().to_vec(),
        y: y.values().to_vec(),
        task: TaskSpec::Inpaint {
            mask,
            sigma: TOY_SIGMA,
            y,
        },
        model,
        schedule,
        prior,
    })
}

fn toy_config(seed: u64) -> SamplerConfig {
    SamplerConfig {
        rho: 0.7,
        n_mc: TOY_BURN_IN + TOY_SAMPLES,
        n_bi: TOY_BURN_IN,
        rescale_input: true,
        seed,
        ..SamplerConfig::default()
    }
}

fn toy_chain(t: &Toy, seed: u64) -> Result<Chain, String> {
    run_sampler(&t.task, &t.model, &t.schedule, &toy_config(seed)).map_err(|e| e.to_string())
}

fn conjugate_end_to_end() -> Outcome {
    let t = toy()?;
    let chain = toy_chain(&t, 0)?;
    let cap = toy_config(0).resolved_cap(&t.schedule);
    let pinned = chain.t_star_trace().iter().all(|&s| s == cap);
    ensure(pinned, || format!("t* left the cap {cap}; the oracle assumes it is pinned"))?;

    let oracle = inpaint_chain_law(
        &t.kept,
        &t.y,
        TOY_SIGMA,
        0.7,
        t.prior.as_slice(),
        TOY_TAU2,
        t.schedule.betas(),
        cap,
        TOY_SAMPLES,
    );
    let n = TOY_SIDE * TOY_SIDE;
    let mut m = Moments::new(n);
    for x in &chain.x_samples().ok_or("chain unexpectedly thin")?[TOY_BURN_IN..] {
        m.push(x.as_slice());
    }
    let (mmse_x, _) = mmse(&chain).map_err(|e| e.to_string())?;
    let mean: Vec<f64> = oracle.law.mean.iter().copied().collect();
    let se: Vec<f64> = oracle.mean_se.iter().copied().collect();
    let zm = max_z(mmse_x.as_slice(), &mean, &se);

    let var: Vec<f64> = oracle.law.variances().iter().copied().collect();
    let inside = m
        .variance()
        .iter()
        .zip(&var)
        .zip(oracle.variance_se.iter())
        .filter(|((v, o), s)| ((*v - *o) / *s).abs() <= 4.0)
        .count();
    let detail = format!("mean max {zm:.2} SE over {n} px, variances within 4 SE: {inside}/{n}");
    ensure(zm <= 3.0, || format!("{detail}; a pixel mean exceeds 3 SE"))?;
    ensure(inside as f64 >= 0.95 * n as f64, || format!("{detail}; fewer than 95% of variances"))?;
    Ok(detail)
}

fn windowed_medians(trace: &[usize], window: usize) -> Vec<usize> {
    trace
        .windows(window)
        .map(|w| {
            let mut v = w.to_vec();
            v.sort_unstable();
            v[window / 2]
        })
        .collect()
}

fn t_star_trace() -> Outcome {
    let t = toy()?;
    let mut passing = 0;
    let mut detail = Vec::new();
    for seed in 0..20u64 {
        let chain = toy_chain(&t, seed)?;
        let trace = &chain.t_star_trace()[TOY_BURN_IN..];
        let medians = windowed_medians(trace, 5);
        let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
        let tail = &trace[trace.len() - 20..];
        let range = tail.iter().max().unwrap() - tail.iter().min().unwrap();
        if monotone && range <= 2 {
            passing += 1;
        } else {
            detail.push(format!("seed {seed}: monotone={monotone} range={range}"));
        }
    }
    let summary = format!("{passing}/20 seeds stable");
    ensure(passing >= 18, || format!("{summary}; {}", detail.join(", ")))?;
    Ok(summary)
}

fn determinism() -> Outcome {
    let t = toy()?;
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    for dir in &dirs {
        let chain = toy_chain(&t, 0)?;
        write_checkpoint(dir.path(), &chain, &t.schedule.id(), &json!({"task": "toy-inpaint"}))
            .map_err(|e| e.to_string())?;
    }
    let mut names: Vec<_> = fs::read_dir(dirs[0].path())
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.file_name()).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    names.sort();
    let mut bytes = 0;
    for name in &names {
        let a = fs::read(dirs[0].path().join(name)).map_err(|e| e.to_string())?;
        let b = fs::read(dirs[1].path().join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{name:?} differs between runs"))?;
        bytes += a.len();
    }
    Ok(format!("{} files, {bytes} bytes identical", names.len()))
}

// 4. Schedules

fn schedule_correctness() -> Outcome {
    let linear = Schedule::linear(1000, 1e-4, 2e-2).map_err(|e| e.to_string())?;
    let cosine = Schedule::cosine(1000, 0.008).map_err(|e| e.to_string())?;
    ensure(linear.betas()[0] == 1e-4 && linear.betas()[999] == 2e-2, || {
        format!("linear endpoints {} and {}", linear.betas()[0], linear.betas()[999])
    })?;
    for (name, s) in [("linear", &linear), ("cosine", &cosine)] {
        let nu = s.noise_variances();
        ensure(nu.windows(2).all(|w| w[0] < w[1]), || format!("{name}: nu not strictly increasing"))?;
        for step in 0..=s.steps() {
            let back = s.invert_noise_variance(nu[step]);
            ensure(back == step, || format!("{name}: invert(nu({step})) = {back}"))?;
        }
    }
    let (first, last) = (cosine.noise_variances()[0], cosine.noise_variances()[1000]);
    ensure(first == 0.0 && last == 1.0, || format!("cosine nu(0) = {first}, nu(T) = {last}"))?;
    Ok("endpoints exact, monotone, inversion exact on 2 x 1001 grid points".into())
}

// 5. Single-shot vs sequential forward sampling

fn forward_composition() -> Outcome {
    let s = Schedule::linear(1000, 1e-4, 2e-2).map_err(|e| e.to_string())?;
    let shape = Shape::new(1, 4, 4);
    let u0 = Image::from_fn(shape, |_, i, j| (i as f64 - 1.5) * 0.4 + j as f64 * 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for t in [1, 10, 100] {
        let (mut single, mut seq) = (Moments::new(16), Moments::new(16));
        for _ in 0..10_000 {
            single.push(forward_diffuse(&u0, t, &s, &mut rng).map_err(|e| e.to_string())?.as_slice());
            let mut u = u0.clone();
            for step in 1..=t {
                let b = s.betas()[step - 1];
                let e = Image::standard_normal(shape, &mut rng);
                u = u
                    .zip_map(&e, |v, n| (1.0 - b).sqrt() * v + b.sqrt() * n)
                    .map_err(|e| e.to_string())?;
            }
            seq.push(u.as_slice());
        }
        let pooled = |a: Vec<f64>, b: Vec<f64>| -> Vec<f64> { a.iter().zip(&b).map(|(p, q)| p.hypot(*q)).collect() };
        let zm = max_z(single.mean(), seq.mean(), &pooled(single.mean_se(), seq.mean_se()));
        let zv = max_z(&single.variance(), &seq.variance(), &pooled(single.variance_se(), seq.variance_se()));
        ensure(zm < 4.0 && zv < 4.0, || format!("t={t}: mean {zm:.2} SE, variance {zv:.2} SE"))?;
        worst = worst.max(zm).max(zv);
    }
    Ok(format!("t in {{1, 10, 100}}, worst {worst:.2} SE"))
}

// 6. Noise estimator

fn noise_estimator() -> Outcome {
    let shape = Shape::new(1, 64, 64);
    let texture = Image::from_fn(shape, |_, i, j| {
        let (x, y) = (i as f64, j as f64);
        0.5 + 0.2 * (x / 5.0).sin() * (y / 7.0).cos() + 0.1 * ((x + y) / 11.0).sin()
    });
    let mut worst = 0.0f64;
    for (name, clean) in [("constant", Image::filled(shape, 0.5)), ("texture", texture)] {
        for sigma in [0.05, 0.1, 0.2] {
            let mut total = 0.0;
            for seed in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let e = Image::standard_normal(shape, &mut rng);
                let noisy = clean.zip_map(&e, |v, n| v + sigma * n).map_err(|e| e.to_string())?;
                total += estimate_sigma(&noisy).map_err(|e| e.to_string())?.sigma;
            }
            let rel = (total / 100.0 - sigma).abs() / sigma;
            ensure(rel <= 0.15, || format!("{name}, sigma {sigma}: relative error {rel:.3}"))?;
            worst = worst.max(rel);
        }
    }
    Ok(format!("worst relative error {worst:.3}"))
}

// 8. Restoration utility

fn restoration_utility() -> Outcome {
    let side = 64;
    let shape = Shape::new(1, side, side);
    let truth = Image::from_fn(shape, |_, i, j| {
        let (x, y) = (i as f64 / side as f64, j as f64 / side as f64);
        let disk = if (x - 0.4).powi(2) + (y - 0.6).powi(2) < 0.06 { 0.3 } else { 0.0 };
        0.25 + 0.3 * x + disk + 0.1 * (12.0 * y).sin()
    });
    let kernel = ConvolutionKernel::gaussian(9, 2.0).map_err(|e| e.to_string())?;
    let prior = CirculantOperator::from_kernel(&kernel, side, side)
        .and_then(|b| b.apply(&truth))
        .map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mask = MaskOperator::random(side, side, 0.8, &mut rng).map_err(|e| e.to_string())?;
    let mut y = mask.gather(&truth).map_err(|e| e.to_string())?;
    for v in y.values_mut() {
        let e: f64 = StandardNormal.sample(&mut rng);
        *v += 0.05 * e;
    }
    let task = TaskSpec::Inpaint { mask, sigma: 0.05, y };
    let baseline = task.initial_split().map_err(|e| e.to_string())?;

    let schedule = Schedule::linear(1000, 1e-4, 2e-2).map_err(|e| e.to_string())?;
    let model = GaussianConjugateDenoiser::new(prior, 0.01, &schedule).map_err(|e| e.to_string())?;
    let cfg = SamplerConfig {
        rescale_input: true,
        seed: 8,
        ..SamplerConfig::default()
    };
    let chain = run_sampler(&task, &model, &schedule, &cfg).map_err(|e| e.to_string())?;
    let (estimate, _) = mmse(&chain).map_err(|e| e.to_string())?;
    let gained = psnr(&truth, &estimate, 1.0).map_err(|e| e.to_string())?;
    let base = psnr(&truth, &baseline, 1.0).map_err(|e| e.to_string())?;
    let detail = format!("MMSE {gained:.2} dB vs mean-filled {base:.2} dB (+{:.2})", gained - base);
    ensure(gained - base >= 3.0, || format!("{detail}; below +3 dB"))?;
    Ok(detail)
}

// 10. PNPD loopback

fn protocol_conformance() -> Outcome {
    let server = env!("CARGO_BIN_EXE_pnpd-identity").to_string();
    let model = ExternalDenoiser::spawn(std::slice::from_ref(&server), 1000, Duration::from_secs(60)).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut payload: Vec<f32> = (0..3 * 32 * 32).map(|_| f32::from_bits(rng.next_u32() & 0x7f7f_ffff)).collect();
    payload[..6].copy_from_slice(&[0.0, -0.0, f32::MIN_POSITIVE, f32::MAX, -f32::MAX, 1.0e-45]);
    let req = Request {
        t_start: 40,
        t_stop: 0,
        dims: [3, 32, 32],
        payload: payload.clone(),
    };
    let echoed = model.request(&req).map_err(|e| e.to_string())?;
    let exact = echoed.len() == payload.len() && echoed.iter().zip(&payload).all(|(a, b)| a.to_bits() == b.to_bits());
    ensure(exact, || "identity round trip is not bit-exact".into())?;
    drop(model);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let image: Vec<f32> = (0..3 * 32 * 32).map(|k| (k % 97) as f32 / 97.0).collect();
    npy::save(
        &dir.path().join("clean.npy"),
        &NpyArray::new(vec![3, 32, 32], NpyData::F32(image)).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let config = json!({
        "task": {"kind": "inpaint"},
        "sampler": {"n_mc": 4, "n_bi": 1},
        "denoiser": {"kind": "external", "command": [server, "--bad-magic"]},
        "io": {"input": "clean.npy", "measurement_dir": "measured", "output_dir": "out"}
    });
    let path = dir.path().join("run.json");
    fs::write(&path, config.to_string()).map_err(|e| e.to_string())?;
    let cli = env!("CARGO_BIN_EXE_pnp-sgs");
    let run = |cmd: &str, path: &Path| Command::new(cli).args([cmd, "--config"]).arg(path).output();
    let degraded = run("degrade", &path).map_err(|e| e.to_string())?;
    ensure(degraded.status.success(), || {
        format!("degrade failed: {}", String::from_utf8_lossy(&degraded.stderr))
    })?;
    let out = run("run", &path).map_err(|e| e.to_string())?;
    let stderr = String::from_utf8_lossy(&out.stderr);
    ensure(out.status.code() == Some(5) && stderr.contains("magic"), || {
        format!("malformed magic gave exit {:?}: {}", out.status.code(), stderr.trim())
    })?;
    Ok(format!(
        "3x32x32 f32 bit-exact; bad magic -> exit 5 ({})",
        stderr.trim().trim_start_matches("pnp-sgs: ")
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "smw-identity", limit: Some(Duration::from_secs(5)), check: smw_identity },
        Criterion { id: 2, name: "exact-x-steps", limit: Some(Duration::from_secs(60)), check: exact_x_steps },
        Criterion { id: 3, name: "conjugate-end-to-end", limit: Some(Duration::from_secs(300)), check: conjugate_end_to_end },
        Criterion { id: 4, name: "schedule-correctness", limit: Some(Duration::from_secs(1)), check: schedule_correctness },
        Criterion { id: 5, name: "forward-composition", limit: Some(Duration::from_secs(30)), check: forward_composition },
        Criterion { id: 6, name: "noise-estimator", limit: Some(Duration::from_secs(30)), check: noise_estimator },
        Criterion { id: 7, name: "t-star-trace", limit: None, check: t_star_trace },
        Criterion { id: 8, name: "restoration-utility", limit: Some(Duration::from_secs(120)), check: restoration_utility },
        Criterion { id: 9, name: "determinism", limit: None, check: determinism },
        Criterion { id: 10, name: "pnpd-conformance", limit: None, check: protocol_conformance },
    ];

    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(detail), Some(limit)) if elapsed >= limit => {
                Err(format!("{detail}; runtime {:.2} s exceeds {} s", elapsed.as_secs_f64(), limit.as_secs()))
            }
            (other, _) => other,
        };
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2} {:<22} {:>8.2} s  {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
