//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL ...` line.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use grlsm::autodiff::{hvp_nodes, Graph, NodeId};
use grlsm::corpus::{build_dataset, generate_corpus, CorpusSpec, LineTag, Vocab};
use grlsm::dynamics::{acceleration_penalty, energy, integrate_flow, unit_bowl, Trajectory};
use grlsm::metrics::{
    held_out_docs, improvement_pct, latent_stability, perplexity, probe_windows, structural_error_rates,
};
use grlsm::model::{Dims, ModelParams};
use grlsm::regularizer::{
    grad_penalty, hessian_frobenius_sq, regularizer, spectral_norm, FrobeniusMode, LatentVector, RegConfig, RegMode,
};
use grlsm::rng::{SeededRng, Stream};
use grlsm::train::{train, TrainConfig};

/// Written straight to stdout so the line shows up without `--nocapture`.
fn verdict(n: u32, ok: bool, detail: &str) {
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn lv(v: &[f64]) -> LatentVector {
    LatentVector::new(v.to_vec()).unwrap()
}

// ---------------------------------------------------------------- criterion 1

/// Smooth random expressions with a plain `f64` evaluator kept apart from the graph.
#[derive(Clone, Debug)]
enum Expr {
    Var(usize),
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    /// `a / (1 + b²)`
    DivSoft(Box<Expr>, Box<Expr>),
    Tanh(Box<Expr>),
    /// `exp(tanh a)`
    ExpTanh(Box<Expr>),
    /// `ln(1 + a²)`
    LogSq(Box<Expr>),
    Square(Box<Expr>),
    /// `(1 + a²)^p`
    Pow(Box<Expr>, f64),
}

impl Expr {
    fn random(rng: &mut SeededRng, dim: usize, depth: usize) -> Self {
        if depth == 0 || rng.uniform() < 0.15 {
            return if rng.uniform() < 0.8 {
                Expr::Var(rng.below(dim))
            } else {
                Expr::Const(rng.uniform_in(-2.0, 2.0))
            };
        }
        let sub = |rng: &mut SeededRng| Box::new(Expr::random(rng, dim, depth - 1));
        match rng.below(9) {
            0 => Expr::Add(sub(rng), sub(rng)),
            1 => Expr::Sub(sub(rng), sub(rng)),
            2 => Expr::Mul(sub(rng), sub(rng)),
            3 => Expr::DivSoft(sub(rng), sub(rng)),
            4 => Expr::Tanh(sub(rng)),
            5 => Expr::ExpTanh(sub(rng)),
            6 => Expr::LogSq(sub(rng)),
            7 => Expr::Square(sub(rng)),
            _ => {
                let a = sub(rng);
                Expr::Pow(a, rng.uniform_in(-1.5, 1.5))
            }
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        match self {
            Expr::Var(i) => z[*i],
            Expr::Const(c) => *c,
            Expr::Add(a, b) => a.eval(z) + b.eval(z),
            Expr::Sub(a, b) => a.eval(z) - b.eval(z),
            Expr::Mul(a, b) => a.eval(z) * b.eval(z),
            Expr::DivSoft(a, b) => {
                let d = b.eval(z);
                a.eval(z) / (1.0 + d * d)
            }
            Expr::Tanh(a) => a.eval(z).tanh(),
            Expr::ExpTanh(a) => a.eval(z).tanh().exp(),
            Expr::LogSq(a) => {
                let x = a.eval(z);
                (1.0 + x * x).ln()
            }
            Expr::Square(a) => {
                let x = a.eval(z);
                x * x
            }
            Expr::Pow(a, p) => {
                let x = a.eval(z);
                (1.0 + x * x).powf(*p)
            }
        }
    }

    fn build(&self, g: &mut Graph, z: &[NodeId]) -> NodeId {
        match self {
            Expr::Var(i) => z[*i],
            Expr::Const(c) => g.constant(*c),
            Expr::Add(a, b) => {
                let (a, b) = (a.build(g, z), b.build(g, z));
                g.add(a, b)
            }
            Expr::Sub(a, b) => {
                let (a, b) = (a.build(g, z), b.build(g, z));
                g.sub(a, b)
            }
            Expr::Mul(a, b) => {
                let (a, b) = (a.build(g, z), b.build(g, z));
                g.mul(a, b)
            }
            Expr::DivSoft(a, b) => {
                let a = a.build(g, z);
                let b = b.build(g, z);
                let sq = g.square(b);
                let one = g.one();
                let d = g.add(one, sq);
                g.div(a, d)
            }
            Expr::Tanh(a) => {
                let a = a.build(g, z);
                g.tanh(a)
            }
            Expr::ExpTanh(a) => {
                let a = a.build(g, z);
                let t = g.tanh(a);
                g.exp(t)
            }
            Expr::LogSq(a) => {
                let a = a.build(g, z);
                let sq = g.square(a);
                let one = g.one();
                let s = g.add(one, sq);
                g.ln(s)
            }
            Expr::Square(a) => {
                let a = a.build(g, z);
                g.square(a)
            }
            Expr::Pow(a, p) => {
                let a = a.build(g, z);
                let sq = g.square(a);
                let one = g.one();
                let s = g.add(one, sq);
                g.powc(s, *p)
            }
        }
    }
}

fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = want.iter().map(|b| b.abs()).fold(0.0, f64::max).max(1e-3);
    diff / scale
}

struct Derivs {
    grad: Vec<f64>,
    hv: Vec<f64>,
    third: f64,
}

/// Gradient, `H v` and `∇(uᵀ H v) · w` by nested reverse mode.
fn autodiff_derivs(e: &Expr, z: &[f64], u: &[f64], v: &[f64], w: &[f64]) -> Derivs {
    let mut g = Graph::new();
    let zn: Vec<NodeId> = z.iter().map(|&x| g.variable(x)).collect();
    let l = e.build(&mut g, &zn);
    let grad = g.gradient(l, &zn).unwrap();
    let hv = hvp_nodes(&mut g, &grad, &zn, v).unwrap();
    let uhv = g.dot_const(&hv, u);
    let t = g.gradient(uhv, &zn).unwrap();
    Derivs {
        grad: g.values(&grad),
        hv: g.values(&hv),
        third: g.values(&t).iter().zip(w).map(|(a, b)| a * b).sum(),
    }
}

fn shifted(z: &[f64], dir: &[f64], h: f64) -> Vec<f64> {
    z.iter().zip(dir).map(|(a, d)| a + h * d).collect()
}

#[test]
fn criterion_1_derivative_oracles() {
    let start = Instant::now();
    let mut rng = SeededRng::new(2024, Stream::Sampling, 1);
    let (mut worst_g, mut worst_h, mut worst_t) = (0.0f64, 0.0f64, 0.0f64);
    let graphs = 150;
    for _ in 0..graphs {
        let dim = rng.range_inclusive(1, 4);
        let e = Expr::random(&mut rng, dim, 5);
        let z: Vec<f64> = (0..dim).map(|_| rng.uniform_in(-1.5, 1.5)).collect();
        let u = rng.unit_direction(dim);
        let v = rng.unit_direction(dim);
        let w = rng.unit_direction(dim);
        let d = autodiff_derivs(&e, &z, &u, &v, &w);

        let h = 1e-5;
        let fd_grad: Vec<f64> = (0..dim)
            .map(|i| {
                let mut p = z.clone();
                p[i] += h;
                let up = e.eval(&p);
                p[i] = z[i] - h;
                (up - e.eval(&p)) / (2.0 * h)
            })
            .collect();
        worst_g = worst_g.max(rel_err(&d.grad, &fd_grad));

        let h2 = 1e-4;
        let up = autodiff_derivs(&e, &shifted(&z, &v, h2), &u, &v, &w);
        let down = autodiff_derivs(&e, &shifted(&z, &v, -h2), &u, &v, &w);
        let fd_hv: Vec<f64> = up
            .grad
            .iter()
            .zip(&down.grad)
            .map(|(a, b)| (a - b) / (2.0 * h2))
            .collect();
        worst_h = worst_h.max(rel_err(&d.hv, &fd_hv));

        let up = autodiff_derivs(&e, &shifted(&z, &w, h2), &u, &v, &w);
        let down = autodiff_derivs(&e, &shifted(&z, &w, -h2), &u, &v, &w);
        let dot = |x: &[f64]| x.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        let fd_third = (dot(&up.hv) - dot(&down.hv)) / (2.0 * h2);
        worst_t = worst_t.max(rel_err(&[d.third], &[fd_third]));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst_g < 1e-4 && worst_h < 1e-3 && worst_t < 1e-3 && secs < 10.0;
    verdict(
        1,
        ok,
        &format!(
            "{graphs} graphs, max rel err grad {worst_g:.2e} (<1e-4), hvp {worst_h:.2e} (<1e-3), \
             third {worst_t:.2e} (<1e-3), {secs:.2}s (<10s)"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 2

fn quadratic(a: [[f64; 2]; 2]) -> impl Fn(&mut Graph, &[NodeId]) -> NodeId {
    move |g, z| {
        let mut terms = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                if a[i][j] != 0.0 {
                    let p = g.mul(z[i], z[j]);
                    terms.push(g.scale(p, 0.5 * a[i][j]));
                }
            }
        }
        g.sum(&terms)
    }
}

#[test]
fn criterion_2_analytic_regularizers() {
    let start = Instant::now();
    let z = lv(&[1.0, 1.0]);
    let diag = quadratic([[3.0, 0.0], [0.0, 1.0]]);
    let exact = RegConfig::default();
    let gp = grad_penalty(&diag, &z).unwrap();
    let fro = hessian_frobenius_sq(&diag, &z, &exact, 0).unwrap();
    let (sigma, _) = spectral_norm(&diag, &z, &exact, 0).unwrap();

    let hutch = RegConfig {
        frobenius_mode: FrobeniusMode::Hutchinson,
        hutchinson_samples: 2000,
        ..RegConfig::default()
    };
    // Off-diagonal A so the probe estimate is not trivially exact: ‖A‖_F² = 4 + 1 + 1 + 9.
    let full = quadratic([[2.0, 1.0], [1.0, 3.0]]);
    let fro_full = 15.0;
    let est_diag = hessian_frobenius_sq(&diag, &z, &hutch, 7).unwrap();
    let est_full = hessian_frobenius_sq(&full, &z, &hutch, 7).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let closed = [(gp, 10.0), (fro, 10.0), (sigma, 3.0)];
    let analytic_ok = closed.iter().all(|(got, want)| (got - want).abs() <= 1e-8);
    let hutch_dev = [(est_diag - 10.0).abs() / 10.0, (est_full - fro_full).abs() / fro_full];
    let ok = analytic_ok && hutch_dev.iter().all(|&d| d <= 0.05) && secs < 5.0;
    verdict(
        2,
        ok,
        &format!(
            "grad_penalty {gp} (10), frobenius {fro} (10), sigma {sigma} (3) within 1e-8; \
             hutchinson k=2000 off by {:.2}% / {:.2}% (≤5%); {secs:.3}s (<5s)",
            100.0 * hutch_dev[0],
            100.0 * hutch_dev[1]
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_flow() {
    let start = Instant::now();
    let cfg = RegConfig {
        lambda: 0.5,
        ..RegConfig::default()
    };
    let traj = integrate_flow(&lv(&[1.0, -2.0, 0.5]), &unit_bowl, &cfg, 0.1, 25).unwrap();
    let norms: Vec<f64> = traj.points().iter().map(|(_, z)| z.norm()).collect();
    let worst_factor = norms.windows(2).map(|w| (w[1] / w[0] - 0.8).abs()).fold(0.0, f64::max);

    let line = |dt: f64, a: [f64; 2], b: [f64; 2]| {
        let zs = (0..12)
            .map(|k| lv(&[a[0] + k as f64 * b[0], a[1] + k as f64 * b[1]]))
            .collect();
        Trajectory::new(dt, zs).unwrap()
    };
    let dyadic = acceleration_penalty(&line(0.5, [0.25, -1.0], [0.125, 0.75])).unwrap();
    let decimal = acceleration_penalty(&line(0.1, [0.3, -1.7], [0.1, 0.35])).unwrap();

    let last = traj.last().unwrap();
    let mut g = Graph::new();
    let zn: Vec<NodeId> = last.as_slice().iter().map(|&v| g.variable(v)).collect();
    let l = unit_bowl(&mut g, &zn);
    let loss_value = g.value(l) + cfg.lambda * regularizer(&unit_bowl, last, &cfg, 0).unwrap();
    let e = energy(
        &traj,
        loss_value,
        &RegConfig {
            delta: 0.0,
            ..cfg.clone()
        },
    )
    .unwrap();
    let secs = start.elapsed().as_secs_f64();

    let ok = worst_factor <= 1e-10 && dyadic == 0.0 && decimal <= 1e-20 && e == loss_value && secs < 1.0;
    verdict(
        3,
        ok,
        &format!(
            "contraction |ratio-0.8| ≤ {worst_factor:.1e} (1e-10), linear penalty {dyadic} / {decimal:.1e}, \
             energy(δ=0) {e} vs loss {loss_value}, {secs:.3}s (<1s)"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- CLI helpers

fn grlsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grlsm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = grlsm(args);
    assert!(
        out.status.success(),
        "grlsm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn model_weights(p: &Path) -> serde_json::Value {
    let v: serde_json::Value = serde_json::from_slice(&read(p)).unwrap();
    v["weights"].clone()
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_reduction_identity() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("c.txt");
    ok(&["gen-corpus", "--out", s(&corpus), "--docs", "40", "--seed", "5"]);

    let common = r#""epochs": 2, "steps_per_epoch": 15, "lr": 0.1, "batch": 8, "seed": 3"#;
    let configs = [
        (
            "base",
            format!(r#"{{"train": {{{common}}}, "corpus": {{"max_len": 96}}}}"#),
        ),
        (
            "zero",
            format!(
                r#"{{"train": {{{common}, "reg": {{"lambda": 0, "beta": 0, "gamma": 0, "delta": 0}}}},
                    "corpus": {{"max_len": 96}}}}"#
            ),
        ),
        (
            "full",
            format!(
                r#"{{"train": {{{common}, "reg": {{"lambda": 0, "beta": 0, "gamma": 0, "delta": 0,
                    "reg_mode": "full", "frobenius_mode": "hutchinson"}}}}, "corpus": {{"max_len": 96}}}}"#
            ),
        ),
    ];
    let mut runs: Vec<(PathBuf, PathBuf)> = Vec::new();
    for (name, cfg) in &configs {
        let sub = d.join(name);
        std::fs::create_dir(&sub).unwrap();
        let cfg_path = sub.join("run.json");
        std::fs::write(&cfg_path, cfg).unwrap();
        let model = sub.join("model.json");
        ok(&[
            "train",
            "--config",
            s(&cfg_path),
            "--corpus",
            s(&corpus),
            "--out",
            s(&model),
        ]);
        runs.push((model, sub.join("history.csv")));
    }
    let files_equal = read(&runs[0].0) == read(&runs[1].0) && read(&runs[0].1) == read(&runs[1].1);
    // The full-mode run records a different reg_mode in its config block, so only weights and history are compared.
    let full_equal = model_weights(&runs[0].0) == model_weights(&runs[2].0) && read(&runs[0].1) == read(&runs[2].1);
    let ok = files_equal && full_equal;
    verdict(
        4,
        ok,
        &format!(
            "λ=β=γ=δ=0 vs baseline: model+history files identical {files_equal}; \
             full/hutchinson mode weights+history identical {full_equal}"
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_table_arithmetic() {
    // (label, baseline, regularized, stated improvement)
    let cells = [
        ("stability eps 0.1", 0.85, 0.71, 16.5),
        ("stability eps 0.5", 1.34, 1.02, 23.9),
        ("stability eps 1.0", 2.45, 1.82, 25.7),
        ("stability eps 2.0", 4.87, 3.69, 24.2),
        ("stability eps 5.0", 9.32, 7.15, 23.3),
        ("inconsistent headings", 14.2, 9.1, 35.9),
        ("missing bullet points", 18.5, 12.3, 33.5),
        ("improper indentation", 11.9, 7.8, 34.5),
        ("incorrect numbering", 16.2, 10.7, 33.9),
        ("perplexity", 35.7, 28.4, 20.4),
    ];
    let mut mismatches = Vec::new();
    for (label, b, g, want) in cells {
        let got = improvement_pct(b, g).unwrap();
        if got != want {
            mismatches.push(format!("{label}: {b} -> {g} gives {got}, stated {want}"));
        }
    }
    let ok = mismatches.is_empty();
    verdict(
        5,
        ok,
        &format!(
            "{}/{} cells reproduced exactly{}{}",
            cells.len() - mismatches.len(),
            cells.len(),
            if ok { "" } else { "; " },
            mismatches.join("; ")
        ),
    );
    assert!(ok, "{mismatches:?}");
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_directional_stability() {
    let start = Instant::now();
    let spec = CorpusSpec {
        docs: 200,
        ..CorpusSpec::default()
    };
    let vocab = Vocab::generator();
    let texts: Vec<String> = generate_corpus(&spec).into_iter().map(|d| d.text).collect();
    let data = build_dataset(&texts, &vocab, 8, 128, 0).unwrap();
    let dims = Dims {
        embed: 8,
        hidden: 32,
        latent: 8,
    };
    let eps = [0.1, 0.5, 1.0];
    let mut lower_seeds = 0;
    let mut ppl_ok = true;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let init = ModelParams::init(vocab.clone(), 8, dims, seed);
        let base_cfg = TrainConfig {
            lr: 0.1,
            batch: 16,
            epochs: 4,
            steps_per_epoch: 250,
            seed,
            ..TrainConfig::default()
        };
        let reg_cfg = TrainConfig {
            reg: RegConfig {
                lambda: 0.1,
                reg_mode: RegMode::Analysis,
                ..RegConfig::default()
            },
            ..base_cfg.clone()
        };
        let mut results = Vec::new();
        for cfg in [&base_cfg, &reg_cfg] {
            let (m, _) = train(&init, &data, cfg).unwrap();
            let held = data.examples_for(&held_out_docs(&m, texts.len()));
            let ppl = perplexity(&m, &held).unwrap();
            let rows = latent_stability(&m.evaluator(), &probe_windows(&held, 64), &eps, 16, 0).unwrap();
            results.push((ppl, rows.iter().map(|r| r.latent_std).collect::<Vec<_>>()));
        }
        let (bp, bs) = &results[0];
        let (gp, gs) = &results[1];
        let lower = gs.iter().zip(bs).all(|(g, b)| g < b);
        lower_seeds += usize::from(lower);
        ppl_ok &= *gp <= 1.10 * bp;
        detail.push(format!(
            "seed {seed}: std base {:?} grlsm {:?} ppl {:.2}/{:.2}",
            bs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            gs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>(),
            bp,
            gp
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = lower_seeds >= 4 && ppl_ok && secs <= 300.0;
    verdict(
        6,
        ok,
        &format!(
            "grlsm latent_std lower at eps 0.1/0.5/1.0 for {lower_seeds}/5 seeds (need ≥4), \
             perplexity within 10%: {ppl_ok}, {secs:.0}s (≤300s) [{}]",
            detail.join(" | ")
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_structural_checker() {
    let spec = CorpusSpec {
        docs: 300,
        ..CorpusSpec::default()
    };
    let docs = generate_corpus(&spec);
    let clean = structural_error_rates(&docs).unwrap();
    let clean_ok = clean.rates() == [0.0; 4] && clean.alignment_index().unwrap() == 1.0;

    // Opportunities straight from the generator parameters.
    let mut opp = [0usize; 4];
    for d in &docs {
        for &(bullets, numbered, _) in &d.meta.as_ref().unwrap().sections {
            opp[0] += 1;
            opp[1] += usize::from(bullets > 0);
            opp[2] += bullets + numbered;
            opp[3] += numbered;
        }
    }

    let mut planted = [0usize; 4];
    let mut list_lines = 0usize;
    let mut numbered_lines = 0usize;
    let mut corrupted = Vec::new();
    for (i, d) in docs.iter().enumerate() {
        let lines: Vec<&str> = d.text.split('\n').collect();
        assert_eq!(lines.len(), d.tags.len());
        let last_heading = d.tags.iter().rposition(|t| *t == LineTag::Heading).unwrap();
        let first_heading = d.tags.iter().position(|t| *t == LineTag::Heading).unwrap();
        let mut out: Vec<String> = Vec::new();
        let mut block_pos = 0;
        let mut dropped_intro = false;
        for (k, (&line, &tag)) in lines.iter().zip(&d.tags).enumerate() {
            let mut line = line.to_owned();
            match tag {
                LineTag::Heading if k == last_heading && k != first_heading && i % 3 == 0 => {
                    line.insert(0, '#');
                    planted[0] += 1;
                }
                LineTag::Bullet | LineTag::Numbered => {
                    list_lines += 1;
                    if tag == LineTag::Numbered {
                        block_pos += 1;
                        numbered_lines += 1;
                        if numbered_lines.is_multiple_of(7) {
                            let rest = line.split_once(". ").unwrap().1.to_owned();
                            line = format!("{}. {rest}", block_pos + 1);
                            planted[3] += 1;
                        }
                    }
                    if list_lines.is_multiple_of(5) {
                        line.insert(0, ' ');
                        planted[2] += 1;
                    }
                }
                _ => {}
            }
            if tag != LineTag::Numbered {
                block_pos = 0;
            }
            let intro = tag == LineTag::Body && line.ends_with(':') && d.tags.get(k + 1) == Some(&LineTag::Bullet);
            out.push(line);
            // A plain sentence between the introducer and its first bullet.
            if intro && i % 4 == 1 && !dropped_intro {
                out.push("see below.".into());
                planted[1] += 1;
                dropped_intro = true;
            }
        }
        corrupted.push(out.join("\n"));
    }
    let rates = structural_error_rates(&corrupted).unwrap();
    let want: [f64; 4] = std::array::from_fn(|k| 100.0 * planted[k] as f64 / opp[k] as f64);
    let want_align = 1.0 - want.iter().sum::<f64>() / 4.0 / 100.0;
    let counts_ok = rates.counts.violations == planted && rates.counts.opportunities == opp;
    let rates_ok = rates.rates() == want && (rates.alignment_index().unwrap() - want_align).abs() <= 1e-15;
    let all_planted = planted.iter().all(|&p| p > 0);
    let ok = clean_ok && counts_ok && rates_ok && all_planted;
    verdict(
        7,
        ok,
        &format!(
            "clean rates {:?} alignment {}; planted {planted:?} of {opp:?} -> rates {:?} (want {want:?})",
            clean.rates(),
            clean.alignment_index().unwrap(),
            rates.rates()
        ),
    );
    assert!(ok);
}

// ---------------------------------------------------------------- criterion 8

/// Runs `args` twice and returns whether stdout and every listed file came out byte-identical.
fn repeat_identical(args: &[&str], files: &[&Path]) -> bool {
    let first = ok(args);
    let before: Vec<Vec<u8>> = files.iter().map(|f| read(f)).collect();
    for f in files {
        std::fs::remove_file(f).unwrap();
    }
    let second = ok(args);
    let after: Vec<Vec<u8>> = files.iter().map(|f| read(f)).collect();
    first.stdout == second.stdout && before == after
}

#[test]
fn criterion_8_cli_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |n: &str| d.join(n);
    let mut results: Vec<(&str, bool)> = Vec::new();

    let corpus = p("corpus.txt");
    results.push((
        "gen-corpus",
        repeat_identical(
            &["gen-corpus", "--out", s(&corpus), "--docs", "30", "--seed", "9"],
            &[&corpus, &p("corpus.config.json")],
        ),
    ));

    let cfg = p("run.json");
    std::fs::write(
        &cfg,
        r#"{"train": {"epochs": 2, "steps_per_epoch": 10, "lr": 0.1, "batch": 8, "seed": 1,
             "reg": {"lambda": 0.1}},
            "corpus": {"max_len": 96},
            "eval": {"windows": 8, "passes": 4, "samples": 2, "gen_len": 40}}"#,
    )
    .unwrap();
    let model = p("model.json");
    results.push((
        "train",
        repeat_identical(
            &["train", "--config", s(&cfg), "--corpus", s(&corpus), "--out", s(&model)],
            &[&model, &p("history.csv"), &p("model.config.json")],
        ),
    ));

    let report = p("report.json");
    results.push((
        "eval",
        repeat_identical(
            &[
                "eval",
                "--model",
                s(&model),
                "--corpus",
                s(&corpus),
                "--out",
                s(&report),
                "--config",
                s(&cfg),
            ],
            &[&report, &p("report.config.json")],
        ),
    ));

    let stab = p("stab.csv");
    results.push((
        "stability",
        repeat_identical(
            &[
                "stability",
                "--model",
                s(&model),
                "--corpus",
                s(&corpus),
                "--out",
                s(&stab),
                "--passes",
                "4",
                "--windows",
                "8",
            ],
            &[&stab, &p("stab.config.json")],
        ),
    ));

    let flow = p("flow.csv");
    results.push((
        "flow demo",
        repeat_identical(
            &[
                "flow",
                "--demo",
                "quadratic",
                "--z0",
                "0.5,-1",
                "--dt",
                "0.1",
                "--steps",
                "10",
                "--lambda",
                "0.5",
                "--delta",
                "0.2",
                "--out",
                s(&flow),
            ],
            &[&flow, &p("flow.config.json")],
        ),
    ));
    let mflow = p("mflow.csv");
    results.push((
        "flow model",
        repeat_identical(
            &[
                "flow",
                "--model",
                s(&model),
                "--corpus",
                s(&corpus),
                "--example",
                "3",
                "--dt",
                "0.05",
                "--steps",
                "5",
                "--lambda",
                "0.1",
                "--out",
                s(&mflow),
            ],
            &[&mflow, &p("mflow.config.json")],
        ),
    ));

    let cmp = p("cmp.csv");
    results.push((
        "report",
        repeat_identical(
            &[
                "report",
                "--baseline",
                s(&report),
                "--grlsm",
                s(&report),
                "--out",
                s(&cmp),
            ],
            &[&cmp, &p("cmp.config.json")],
        ),
    ));

    let ok = results.iter().all(|(_, r)| *r);
    let detail: Vec<String> = results
        .iter()
        .map(|(n, r)| format!("{n} {}", if *r { "identical" } else { "DIFFERS" }))
        .collect();
    verdict(8, ok, &detail.join(", "));
    assert!(ok);
}
