//! Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Tolerances and runtime budgets are pinned below.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use scatgate::classify::{
    self, logistic_loss_and_gradient, ClassifierSpec, Labeled, LogisticParams,
};
use scatgate::dataset::{
    DatasetManifest, LabelStore, ManifestEntry, Origin, PatternClass, ProbabilityVector, Verdict,
};
use scatgate::ensemble::{self, ClassifierColumn, Strategy, VoteConfig};
use scatgate::frame::{Center, ScatterFrame};
use scatgate::metrics::{self, GaussianMoments};
use scatgate::physics::{self, RealismConfig, RealismReport};
use scatgate::rounds::{self, NextRoundOptions, RoundTargets};
use scatgate::simulation::{self, SimulationConfig};
use scatgate::synth::{
    self, corrupt, generate_rings, CleanCorrupted, CorpusConfig, CorruptionAnchor, CorruptionKind,
    CorruptionSpec, PatternCounts, Ring, RingSpec,
};

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: scatgate::Error) -> String {
    e.to_string()
}

// ── metrics ──────────────────────────────────────────────────────────────────

fn identity(d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { scale } else { 0.0 }).collect())
        .collect()
}

fn metric_closed_forms() -> Result<String, String> {
    let a = GaussianMoments::new(vec![0.0, 0.0], identity(2, 1.0)).map_err(err)?;
    let shifted = GaussianMoments::new(vec![1.0, 0.0], identity(2, 1.0)).map_err(err)?;
    let wide = GaussianMoments::new(vec![0.0, 0.0], identity(2, 4.0)).map_err(err)?;
    let f1 = metrics::frechet_distance(&a, &shifted).map_err(err)?.value;
    let f2 = metrics::frechet_distance(&a, &wide).map_err(err)?.value;
    let f0 = metrics::frechet_distance(&a, &a).map_err(err)?.value;
    ensure((f1 - 1.0).abs() <= 1e-9, || format!("mean shift gave {f1}"))?;
    ensure((f2 - 2.0).abs() <= 1e-9, || {
        format!("covariance 4I gave {f2}")
    })?;
    ensure(f0.abs() <= 1e-9, || format!("identical moments gave {f0}"))?;
    Ok(format!("shift={f1:.12} wide={f2:.12} same={f0:.1e}"))
}

fn kid_oracle() -> Result<String, String> {
    let (x0, x1, y0, y1) = ([0.0], [0.0], [1.0], [1.0]);
    let m = metrics::mmd2_unbiased(&[&x0[..], &x1[..]], &[&y0[..], &y1[..]]);
    // k(x,y) = (x*y/d + 1)^3: k(0,0)=1, k(1,1)=8, k(0,1)=1 -> 1 + 8 - 2*1
    ensure(m == 7.0, || format!("hand case gave {m}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut draw = |n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..16).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    };
    let (xs, ys) = (draw(2000), draw(2000));
    let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let yr: Vec<&[f64]> = ys.iter().map(Vec::as_slice).collect();
    let k = metrics::kid(&xr, &yr, 1000, 50, 7).map_err(err)?;
    ensure(k.mean.abs() <= 3.0 * k.std, || {
        format!("null KID {} +/- {}", k.mean, k.std)
    })?;
    Ok(format!("hand=7 null={:.2e}+/-{:.2e}", k.mean, k.std))
}

fn inception_score_cases() -> Result<String, String> {
    let uniform = vec![vec![0.25; 4]; 40];
    let u = metrics::inception_score(&uniform, 1, 0).map_err(err)?.mean;
    ensure((u - 1.0).abs() <= 1e-9, || format!("uniform rows gave {u}"))?;
    let c = 7;
    let one_hot: Vec<Vec<f64>> = (0..c * 5)
        .map(|i| (0..c).map(|j| if j == i % c { 1.0 } else { 0.0 }).collect())
        .collect();
    let s = metrics::inception_score(&one_hot, 1, 0).map_err(err)?.mean;
    ensure((s - c as f64).abs() <= 1e-9, || format!("one-hot gave {s}"))?;
    Ok(format!("uniform={u:.12} one-hot(C=7)={s:.12}"))
}

fn published_f1() -> Result<String, String> {
    let f1 = metrics::f1_score(0.8613, 0.87);
    ensure((f1 - 0.8656).abs() <= 5e-4, || format!("f1 {f1}"))?;
    Ok(format!("f1={f1:.5} vs 0.8656"))
}

// ── voting ───────────────────────────────────────────────────────────────────

fn voting_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for panel in 0..1000 {
        let n = rng.random_range(3..=9);
        let ps: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let tie = if rng.random_bool(0.5) {
            Verdict::Realistic
        } else {
            Verdict::Fake
        };
        let probs: Vec<ProbabilityVector> = ps
            .iter()
            .map(|&p| ProbabilityVector::realistic(p).unwrap())
            .collect();

        let mut votes = 0i32;
        for &p in &ps {
            votes += if p >= 0.5 { 1 } else { -1 };
        }
        let want_hard = match votes {
            v if v > 0 => Verdict::Realistic,
            v if v < 0 => Verdict::Fake,
            _ => tie,
        };
        let hard = ensemble::decide(
            &VoteConfig {
                tie_break: tie,
                ..VoteConfig::new(Strategy::Hard)
            },
            &probs,
        )
        .map_err(err)?;
        ensure(hard.verdict == want_hard, || {
            format!("panel {panel}: hard vote differs")
        })?;

        let mut sum = 0.0;
        for i in 0..n {
            sum += w[i] * ps[i];
        }
        let want_soft = if sum >= 0.5 {
            Verdict::Realistic
        } else {
            Verdict::Fake
        };
        let soft = ensemble::decide(&VoteConfig::weighted(w.clone()), &probs).map_err(err)?;
        ensure(
            soft.p_realistic == sum.clamp(0.0, 1.0) && soft.verdict == want_soft,
            || {
                format!(
                    "panel {panel}: weighted soft vote {} vs {sum}",
                    soft.p_realistic
                )
            },
        )?;

        let uniform = vec![1.0 / n as f64; n];
        let avg = ensemble::decide(&VoteConfig::new(Strategy::SoftAverage), &probs).map_err(err)?;
        let via_weights = ensemble::decide(&VoteConfig::weighted(uniform), &probs).map_err(err)?;
        ensure(avg == via_weights, || {
            format!("panel {panel}: uniform weights differ from soft average")
        })?;
    }
    Ok("1000 panels match".into())
}

// ── physics ──────────────────────────────────────────────────────────────────

fn ring(radius: f64, sigma: f64) -> Ring {
    Ring {
        radius,
        sigma,
        amplitude: 1.0,
    }
}

fn clean_ring_frame(size: usize, center: Center, rings: Vec<Ring>, seed: u64) -> ScatterFrame {
    let spec = RingSpec {
        center,
        rings,
        beamstop_radius: 6.0,
        gap_bands: Vec::new(),
        background_level: 0.02,
        noise_sigma: 0.0,
    };
    generate_rings(&spec, (size, size), seed).expect("valid ring spec")
}

fn center_detection() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let size = 256;
    let mut hits = 0;
    let mut worst = 0.0f64;
    for i in 0..100 {
        let truth = Center::new(
            128.0 + rng.random_range(-40.0..=40.0),
            128.0 + rng.random_range(-40.0..=40.0),
        );
        let n = rng.random_range(1..=3);
        let rings: Vec<Ring> = (0..n)
            .map(|_| ring(rng.random_range(30.0..110.0), rng.random_range(1.5..3.0)))
            .collect();
        let frame = clean_ring_frame(size, truth, rings, i);
        let fit = physics::find_center(&frame, 40, 4).map_err(err)?;
        let d = fit.center.distance(&truth);
        worst = worst.max(d);
        if d <= 2.0 {
            hits += 1;
        }
    }
    ensure(hits >= 95, || {
        format!("{hits}/100 within 2 px (worst {worst:.2})")
    })?;
    Ok(format!("{hits}/100 within 2 px, worst {worst:.2} px"))
}

fn polar_warp_law() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let size = 208;
    let (mut clean_ok, mut off_ok) = (0, 0);
    let (mut max_clean, mut min_off) = (0.0f64, f64::INFINITY);
    for seed in 0..50 {
        let c = Center::new(
            104.0 + rng.random_range(-4.0..4.0),
            104.0 + rng.random_range(-4.0..4.0),
        );
        let r = rng.random_range(50.0..85.0);
        let frame = clean_ring_frame(size, c, vec![ring(r, 2.0)], seed);
        let n_r = size / 2;
        let polar = physics::warp_polar(&frame, c, physics::DEFAULT_N_THETA, n_r).map_err(err)?;
        let (lo, hi) = ((r - 12.0).round() as usize, (r + 12.0).round() as usize);
        let s_clean = physics::std_dev(&physics::ridge_positions(&polar, lo, hi));
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let off = Center::new(c.x + 10.0 * angle.cos(), c.y + 10.0 * angle.sin());
        let smeared =
            physics::warp_polar(&frame, off, physics::DEFAULT_N_THETA, n_r).map_err(err)?;
        let s_off = physics::std_dev(&physics::ridge_positions(&smeared, lo, hi));
        max_clean = max_clean.max(s_clean);
        min_off = min_off.min(s_off);
        clean_ok += (s_clean <= 1.0) as usize;
        off_ok += (s_off > 3.0) as usize;
    }
    ensure(clean_ok == 50 && off_ok == 50, || {
        format!("centered {clean_ok}/50 <= 1 bin, decentered {off_ok}/50 > 3 bins")
    })?;
    Ok(format!(
        "centered max std {max_clean:.3} bins, decentered min std {min_off:.2} bins"
    ))
}

fn targeted(report: &RealismReport, kind: CorruptionKind) -> f64 {
    match kind.targeted_score() {
        "continuity" => report.continuity,
        "verticality" => report.verticality,
        "symmetry" => report.symmetry,
        "gap_straightness" => report.gap_straightness,
        other => unreachable!("unknown score {other}"),
    }
}

fn corruption_detectability() -> Result<String, String> {
    let size = (128, 128);
    let config = RealismConfig {
        pattern: Some(PatternClass::Rings),
        ..RealismConfig::default()
    };
    let mut lines = Vec::new();
    let mut failed = Vec::new();
    for (k, kind) in CorruptionKind::ALL.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k as u64);
        let mut lowered = 0;
        for _ in 0..50 {
            let needs_gap = kind == CorruptionKind::WavyGap;
            let spec = synth::random_frame_spec(
                PatternClass::Rings,
                size,
                0.004,
                0.5,
                needs_gap,
                &mut rng,
            );
            let clean = spec.render(size, rng.random()).map_err(err)?;
            let magnitude = rng.random_range(0.3..=1.0);
            let c = CorruptionSpec::new(kind, magnitude, rng.random()).anchored(CorruptionAnchor {
                center: spec.center(),
                ring: spec.primary_ring(),
            });
            let bad = corrupt(&clean, &c).map_err(err)?;
            let before = physics::realism_report(&clean, &config).map_err(err)?;
            let after = physics::realism_report(&bad, &config).map_err(err)?;
            if targeted(&after, kind) < targeted(&before, kind) {
                lowered += 1;
            }
        }
        lines.push(format!("{kind:?} {lowered}/50"));
        if lowered < 48 {
            failed.push(kind);
        }
    }

    // calibrated physics rule on clean vs magnitude-0.8 corruptions
    let corpus = CorpusConfig {
        rings: CleanCorrupted {
            clean: 40,
            corrupted: 40,
        },
        peaks: CleanCorrupted {
            clean: 20,
            corrupted: 20,
        },
        background: CleanCorrupted {
            clean: 20,
            corrupted: 20,
        },
        experimental: PatternCounts::default(),
        magnitude: (0.8, 0.8),
        ..CorpusConfig::default()
    };
    let items = synth::synthesize_corpus(&corpus, 31).map_err(err)?;
    let data: Vec<Labeled> = items
        .iter()
        .map(|i| {
            let score = scatgate::pipeline::physics_score(
                &i.frame,
                Some(i.truth.spec.pattern()),
                &RealismConfig::default(),
            );
            Labeled {
                sample: classify::Sample {
                    id: i.truth.id.clone(),
                    features: Vec::new(),
                    physics: Some(score),
                },
                verdict: i.truth.verdict,
            }
        })
        .collect();
    let verdicts: Vec<Verdict> = data.iter().map(|l| l.verdict).collect();
    let (train_idx, test_idx) = classify::split_train_validation(&verdicts, 0.5, 3).map_err(err)?;
    let train: Vec<Labeled> = train_idx.iter().map(|&i| data[i].clone()).collect();
    let model = classify::train(
        "physics",
        &ClassifierSpec::PhysicsRule,
        &train,
        None,
        0,
        1,
        None,
    )
    .map_err(err)?;
    let scores = test_idx
        .iter()
        .map(|&i| {
            model
                .predict_proba(&data[i].sample)
                .map(|p| p.p_realistic())
        })
        .collect::<scatgate::Result<Vec<_>>>()
        .map_err(err)?;
    let positive: Vec<bool> = test_idx
        .iter()
        .map(|&i| data[i].verdict.is_realistic())
        .collect();
    let auc = metrics::roc_auc(&scores, &positive).map_err(err)?;
    lines.push(format!("AUC {auc:.3}"));
    ensure(failed.is_empty() && auc >= 0.9, || lines.join(", "))?;
    Ok(lines.join(", "))
}

// ── loop ─────────────────────────────────────────────────────────────────────

fn hitl_round_improvement() -> Result<String, String> {
    let config = SimulationConfig::default();
    let mut improved = 0;
    let mut series = Vec::new();
    for seed in 0..10 {
        let out = simulation::run_two_rounds(&config, seed).map_err(err)?;
        improved += out.improved() as usize;
        series.push(
            out.weighted_precision
                .iter()
                .map(|p| format!("{p:.3}"))
                .collect::<Vec<_>>()
                .join("->"),
        );
    }
    ensure(improved >= 8, || {
        format!("{improved}/10 seeds improved: {}", series.join(" "))
    })?;
    Ok(format!("{improved}/10 seeds: {}", series.join(" ")))
}

fn synthetic_pool(n_exp: usize, n_real: usize, n_fake: usize) -> (DatasetManifest, LabelStore) {
    let mut entries = Vec::new();
    let mut decisions = Vec::new();
    let mut push = |id: String, origin: Origin, verdict: Option<Verdict>| {
        entries.push(ManifestEntry {
            path: format!("images/{id}.png").into(),
            origin,
            pattern: PatternClass::Rings,
            caption: None,
        });
        if let Some(v) = verdict {
            decisions.push((id, v));
        }
    };
    for i in 0..n_exp {
        push(format!("exp-{i:05}"), Origin::Experimental, None);
    }
    for i in 0..n_real {
        push(
            format!("gen-r-{i:05}"),
            Origin::Generated,
            Some(Verdict::Realistic),
        );
    }
    for i in 0..n_fake {
        push(
            format!("gen-f-{i:05}"),
            Origin::Generated,
            Some(Verdict::Fake),
        );
    }
    let mut labels = LabelStore::new();
    rounds::record_human_labels(
        &mut labels,
        &decisions,
        0,
        "oracle",
        synth::oracle_timestamp(),
    )
    .unwrap();
    (DatasetManifest::new(entries).unwrap(), labels)
}

fn mark_trained(state: &mut rounds::RoundState) -> scatgate::Result<()> {
    let report = ensemble::EnsembleReport {
        round: state.index,
        classifiers: Vec::new(),
        strategies: Vec::new(),
    };
    rounds::commit_training(
        state,
        vec!["m".into()],
        report,
        VoteConfig::new(Strategy::SoftAverage),
    )
}

fn composition_invariants() -> Result<String, String> {
    let (pool, labels) = synthetic_pool(700, 1000, 1400);
    let mut r1 = rounds::seed_round(
        &pool,
        &labels,
        None,
        &RoundTargets::SEED,
        &RoundTargets::SEED,
        1,
    )
    .map_err(err)?;
    let c = r1.composition;
    ensure(
        (c.realistic_experimental, c.realistic_generated, c.fake()) == (40, 60, 100),
        || format!("round 1 {c:?}"),
    )?;
    mark_trained(&mut r1).map_err(err)?;
    let r2 = rounds::build_next_round(
        &mut r1,
        &pool,
        &labels,
        &RoundTargets::NEXT,
        NextRoundOptions::default(),
        1,
    )
    .map_err(err)?;
    let c2 = r2.composition;
    ensure(
        (c2.realistic_experimental, c2.realistic_generated, c2.fake()) == (400, 600, 1000),
        || format!("round 2 {c2:?}"),
    )?;

    let scales = [0.03, 0.05, 0.1, 0.15, 0.2, 0.25, 0.33, 0.5, 0.77, 1.0];
    for &s in &scales {
        let seed_t = RoundTargets::SEED.scaled(s).map_err(err)?;
        let next_t = RoundTargets::NEXT.scaled(s).map_err(err)?;
        let mut a = rounds::seed_round(&pool, &labels, None, &seed_t, &seed_t, 2).map_err(err)?;
        a.composition.check("seed").map_err(err)?;
        mark_trained(&mut a).map_err(err)?;
        let b = rounds::build_next_round(
            &mut a,
            &pool,
            &labels,
            &next_t,
            NextRoundOptions::default(),
            2,
        )
        .map_err(err)?;
        b.check_invariants().map_err(err)?;
        ensure(b.validation == a.validation, || {
            format!("scale {s}: validation changed")
        })?;
    }
    Ok(format!(
        "scale 1: 40+60 vs 100, 400+600 vs 1000; ratio held at {} scales",
        scales.len()
    ))
}

fn gradient_check() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = 6;
    let xs: Vec<Vec<f64>> = (0..30)
        .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect();
    let ys: Vec<f64> = (0..30).map(|i| (i % 2) as f64).collect();
    let xr: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let b = rng.random_range(-1.0..1.0);
        let l2 = 1e-4;
        let (_, gw, gb) = logistic_loss_and_gradient(&w, b, &xr, &ys, l2);
        for j in 0..=d {
            let eval = |delta: f64| {
                let mut w2 = w.clone();
                let mut b2 = b;
                if j < d {
                    w2[j] += delta;
                } else {
                    b2 += delta;
                }
                logistic_loss_and_gradient(&w2, b2, &xr, &ys, l2).0
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let analytic = if j < d { gw[j] } else { gb };
            let rel = (numeric - analytic).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-5, || {
        format!("worst relative error {worst:.2e}")
    })?;
    Ok(format!("worst relative error {worst:.2e} over 20 points"))
}

fn determinism() -> Result<String, String> {
    let corpus = CorpusConfig {
        rings: CleanCorrupted {
            clean: 6,
            corrupted: 6,
        },
        peaks: CleanCorrupted {
            clean: 4,
            corrupted: 4,
        },
        background: CleanCorrupted {
            clean: 3,
            corrupted: 3,
        },
        experimental: PatternCounts {
            rings: 3,
            peaks: 2,
            background: 1,
        },
        ..CorpusConfig::default()
    };
    let dirs = [
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    ];
    for d in &dirs {
        synth::generate_corpus(&corpus, d.path(), 77).map_err(err)?;
    }
    let mut files = 0;
    for entry in walkdir::WalkDir::new(dirs[0].path()).sort_by_file_name() {
        let entry = entry.map_err(|e| e.to_string())?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(dirs[0].path()).unwrap();
        let a = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].path().join(rel)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("{} differs", rel.display()))?;
        files += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<Labeled> = (0..60)
        .map(|i| Labeled {
            sample: classify::Sample {
                id: format!("s{i}"),
                features: (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
                physics: Some(rng.random_range(0.0..1.0)),
            },
            verdict: if i % 2 == 0 {
                Verdict::Realistic
            } else {
                Verdict::Fake
            },
        })
        .collect();
    let specs = [
        ClassifierSpec::Logistic(LogisticParams::default()),
        ClassifierSpec::k_nearest(),
        ClassifierSpec::PhysicsRule,
    ];
    let mut columns = Vec::new();
    for spec in &specs {
        let a = classify::train("m", spec, &data, Some(&data), 4, 1, None).map_err(err)?;
        let b = classify::train("m", spec, &data, Some(&data), 4, 1, None).map_err(err)?;
        let (ja, jb) = (
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap(),
        );
        ensure(ja == jb, || {
            format!("{} training differs", spec.kind_name())
        })?;
        columns.push(ClassifierColumn {
            name: spec.kind_name().into(),
            probabilities: data
                .iter()
                .map(|l| a.predict_proba(&l.sample))
                .collect::<scatgate::Result<_>>()
                .map_err(err)?,
        });
    }
    let truth: Vec<Verdict> = data.iter().map(|l| l.verdict).collect();
    let strategies = [
        VoteConfig::new(Strategy::Hard),
        VoteConfig::new(Strategy::SoftAverage),
        VoteConfig::weighted(vec![0.5, 0.3, 0.2]),
    ];
    let g1 = serde_json::to_string(
        &ensemble::evaluate_grid(&columns, &strategies, &truth, 0.5, 1).map_err(err)?,
    )
    .unwrap();
    let g2 = serde_json::to_string(
        &ensemble::evaluate_grid(&columns, &strategies, &truth, 0.5, 1).map_err(err)?,
    )
    .unwrap();
    ensure(g1 == g2, || "voting report differs".into())?;

    let config = SimulationConfig::default();
    let o1 = serde_json::to_string(&simulation::run_two_rounds(&config, 3).map_err(err)?).unwrap();
    let o2 = serde_json::to_string(&simulation::run_two_rounds(&config, 3).map_err(err)?).unwrap();
    ensure(o1 == o2, || "round report differs".into())?;
    Ok(format!(
        "{files} corpus files, 3 models, voting grid and round report identical"
    ))
}

fn main() {
    let checks: [(&str, Check, Duration); 12] = [
        (
            "metric closed forms",
            metric_closed_forms,
            Duration::from_secs(1),
        ),
        (
            "kernel inception distance",
            kid_oracle,
            Duration::from_secs(10),
        ),
        (
            "inception score",
            inception_score_cases,
            Duration::from_secs(5),
        ),
        (
            "classification report f1",
            published_f1,
            Duration::from_secs(1),
        ),
        ("voting oracle", voting_oracle, Duration::from_secs(10)),
        (
            "center detection",
            center_detection,
            Duration::from_secs(120),
        ),
        ("polar warp law", polar_warp_law, Duration::from_secs(60)),
        (
            "corruption detectability",
            corruption_detectability,
            Duration::from_secs(300),
        ),
        (
            "round-over-round improvement",
            hitl_round_improvement,
            Duration::from_secs(600),
        ),
        (
            "composition invariants",
            composition_invariants,
            Duration::from_secs(60),
        ),
        ("gradient check", gradient_check, Duration::from_secs(5)),
        ("determinism", determinism, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (name, check, budget) in checks {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let over = elapsed > budget;
        match (&result, over) {
            (Ok(detail), false) => {
                println!("PASS {name} [{:.2}s]: {detail}", elapsed.as_secs_f64())
            }
            (Ok(detail), true) => {
                failures += 1;
                println!(
                    "FAIL {name} [{:.2}s > {:.0}s budget]: {detail}",
                    elapsed.as_secs_f64(),
                    budget.as_secs_f64()
                );
            }
            (Err(e), _) => {
                failures += 1;
                println!("FAIL {name} [{:.2}s]: {e}", elapsed.as_secs_f64());
            }
        }
    }
    println!(
        "{} of {} acceptance checks passed",
        checks.len() - failures,
        checks.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
