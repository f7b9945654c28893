//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

use sentibar::backtest::{self, Baseline, Frequency};
use sentibar::bars::{Bar, BarSeries};
use sentibar::corpus::{self, CleaningConfig, Identity, RawTweet};
use sentibar::features::{self, FeatureConfig, FeatureMatrix, ScoredTweet, ScorerColumns, Stats};
use sentibar::gbdt::{self, Node, Samples, TrainParams};
use sentibar::metrics;
use sentibar::pipeline::{self, RunConfig};
use sentibar::sentiment::{self, ScorerRegistry};
use sentibar::synth::{self, SynthConfig};
use sentibar::walkforward::{self, WalkForwardConfig};

/// Tolerances pinned by the criteria.
const ORACLE_TOL: f64 = 1e-9;
const AUC_TOL: f64 = 1e-12;
const LOSS_RISE_TOL: f64 = 1e-6;
const SUM_REL_TOL: f64 = 1e-9;
const VAR_REL_TOL: f64 = 1e-12;
const PLANTED_MIN_AUC: f64 = 0.55;
const PLANTED_MIN_BEATEN: usize = 95;
const PLANTED_TIME_LIMIT: Duration = Duration::from_secs(120);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dec(s: &str) -> Decimal {
    s.parse().unwrap()
}

fn session_end() -> NaiveTime {
    NaiveTime::from_hms_opt(16, 50, 0).unwrap()
}

fn scored(tweets: Vec<RawTweet>, reg: &ScorerRegistry) -> Vec<ScoredTweet> {
    let (clean, _) = corpus::prepare(tweets, &CleaningConfig::default(), &Identity).unwrap();
    pipeline::score_tweets(clean, reg)
}

// 1 -------------------------------------------------------------------------

fn comparison_arithmetic() -> Outcome {
    let day = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap();
    let model: BTreeMap<_, _> = [(day, dec("77.00"))].into();
    // a 100-model ensemble whose mean total is -11.82
    let mut totals = vec![dec("-11.82"); 100];
    totals[0] = dec("-20.00");
    totals[1] = dec("-3.64");
    let sum: Decimal = totals.iter().sum();
    let baseline = Baseline {
        n_models: 100,
        model_totals: totals,
        window_sums: vec![sum],
        windows: vec![day.and_hms_opt(10, 30, 0).unwrap()],
        daily_sums: [(day, sum)].into(),
    };
    let c = backtest::compare(&model, 1, &baseline).map_err(|e| e.to_string())?;
    ensure(c.baseline_mean_total == dec("-11.82"), || format!("mean {}", c.baseline_mean_total))?;
    ensure(c.excess == dec("88.82"), || format!("excess {}", c.excess))?;
    ensure(c.excess.to_string() == "88.82", || format!("excess prints as {}", c.excess))?;
    Ok(format!("excess {}", c.excess))
}

// 2 -------------------------------------------------------------------------

fn planted_matrix(cfg: &SynthConfig, lags: Vec<usize>) -> (FeatureMatrix, BarSeries) {
    let data = synth::generate(cfg);
    let series = data.series(session_end());
    let reg = sentiment::demo_registry();
    let tweets = scored(data.tweets, &reg);
    let fc = FeatureConfig {
        scorers: Some(vec!["afinn".into()]),
        scorer_columns: ScorerColumns::Both,
        tweet_attrs: vec![],
        lags,
    };
    let a = features::assemble(&tweets, &series, &reg, &fc).unwrap();
    (a.matrix, series)
}

fn planted_signal() -> Outcome {
    let start = Instant::now();
    let (matrix, series) = planted_matrix(&SynthConfig::default(), vec![]);
    let wf = WalkForwardConfig {
        train_days: 20,
        ..Default::default()
    };
    let folds = walkforward::make_folds(&matrix.days(), wf.train_days, wf.val_days, wf.test_days)
        .map_err(|e| e.to_string())?;
    let result = walkforward::run_all(&matrix, &TrainParams::default(), &folds, &wf).map_err(|e| e.to_string())?;
    let m = walkforward::compute_metrics(&result.ledger).map_err(|e| e.to_string())?;
    let report = backtest::run_backtest(&result.ledger, &series, &Default::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let auc = m.auc.ok_or("pooled AUC undefined")?;
    let c = &report.comparison;
    let summary = format!(
        "AUC {auc:.4}, pnl {} beats {}/{} random models, {:.1}s",
        c.model_total,
        c.models_beaten,
        c.n_models,
        elapsed.as_secs_f64()
    );
    ensure(auc >= PLANTED_MIN_AUC, || summary.clone())?;
    ensure(c.models_beaten >= PLANTED_MIN_BEATEN && c.n_models == 100, || summary.clone())?;
    ensure(elapsed <= PLANTED_TIME_LIMIT, || summary.clone())?;
    ensure(walkforward::leakage_free(&result.folds), || "test rows leaked into training".into())?;
    Ok(summary)
}

// 3 -------------------------------------------------------------------------

#[derive(Debug)]
enum ONode {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

struct OracleParams {
    lambda: f64,
    gamma: f64,
    mcw: f64,
    depth: usize,
}

type BestSplit = (f64, usize, f64, bool, Vec<usize>, Vec<usize>);

/// Exhaustive split enumeration over plain row subsets.
fn oracle_tree(x: &[[f64; 2]], g: &[f64], h: &[f64], p: &OracleParams) -> Vec<ONode> {
    let sum = |rows: &[usize], v: &[f64]| rows.iter().map(|&i| v[i]).sum::<f64>();
    let score = |gs: f64, hs: f64| gs * gs / (hs + p.lambda);
    let mut nodes = vec![ONode::Leaf(0.0)];
    let mut level: Vec<(usize, Vec<usize>)> = vec![(0, (0..x.len()).collect())];
    for depth in 0..=p.depth {
        let mut next = Vec::new();
        for (id, rows) in level {
            let (gt, ht) = (sum(&rows, g), sum(&rows, h));
            // (gain, feature, threshold, default_left, left rows, right rows)
            let mut best: Option<BestSplit> = None;
            if depth < p.depth {
                #[allow(clippy::needless_range_loop)]
                for f in 0..2 {
                    let miss: Vec<usize> = rows.iter().copied().filter(|&i| x[i][f].is_nan()).collect();
                    let mut vals: Vec<f64> = rows.iter().map(|&i| x[i][f]).filter(|v| !v.is_nan()).collect();
                    vals.sort_by(f64::total_cmp);
                    vals.dedup();
                    let mut cands: Vec<(f64, bool)> = Vec::new();
                    if !miss.is_empty() && !vals.is_empty() {
                        cands.push((vals[0], true));
                    }
                    for w in vals.windows(2) {
                        let t = (w[0] + w[1]) / 2.0;
                        if miss.is_empty() {
                            cands.push((t, true));
                        } else {
                            cands.push((t, true));
                            cands.push((t, false));
                        }
                    }
                    for (t, dl) in cands {
                        let goes_left = |i: usize| if x[i][f].is_nan() { dl } else { x[i][f] < t };
                        let left: Vec<usize> = rows.iter().copied().filter(|&i| goes_left(i)).collect();
                        let right: Vec<usize> = rows.iter().copied().filter(|&i| !goes_left(i)).collect();
                        let (gl, hl, gr, hr) = (sum(&left, g), sum(&left, h), sum(&right, g), sum(&right, h));
                        if hl < p.mcw || hr < p.mcw {
                            continue;
                        }
                        let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gt, ht)) - p.gamma;
                        let better = match &best {
                            None => gain > 0.0,
                            Some(b) => gain > b.0 + ORACLE_TOL * b.0.abs().max(gain.abs()),
                        };
                        if better {
                            best = Some((gain, f, t, dl, left, right));
                        }
                    }
                }
            }
            match best {
                Some((_, feature, threshold, default_left, l, r)) => {
                    let left = nodes.len();
                    nodes.push(ONode::Leaf(0.0));
                    nodes.push(ONode::Leaf(0.0));
                    nodes[id] = ONode::Split {
                        feature,
                        threshold,
                        default_left,
                        left,
                        right: left + 1,
                    };
                    next.push((left, l));
                    next.push((left + 1, r));
                }
                None => nodes[id] = ONode::Leaf(-gt / (ht + p.lambda)),
            }
        }
        level = next;
    }
    nodes
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ORACLE_TOL * a.abs().max(b.abs()).max(1.0)
}

fn compare_trees(got: &[Node], want: &[ONode]) -> Result<(), String> {
    ensure(got.len() == want.len(), || format!("{} nodes, oracle has {}", got.len(), want.len()))?;
    for (i, (a, b)) in got.iter().zip(want).enumerate() {
        let ok = match (a, b) {
            (
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                },
                ONode::Split {
                    feature: f2,
                    threshold: t2,
                    default_left: d2,
                    left: l2,
                    right: r2,
                },
            ) => feature == f2 && close(*threshold, *t2) && default_left == d2 && left == l2 && right == r2,
            (Node::Leaf { weight }, ONode::Leaf(w2)) => close(*weight, *w2),
            _ => false,
        };
        ensure(ok, || format!("node {i}: got {a:?}, oracle {b:?}"))?;
    }
    Ok(())
}

fn gbdt_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut splits = 0;
    for case in 0..200 {
        let n = rng.random_range(2..=32);
        let nan_rate = if case % 2 == 0 { 0.0 } else { 0.15 };
        let levels = rng.random_range(2..=8);
        let x: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                [0, 1].map(|_| {
                    if rng.random_bool(nan_rate) {
                        f64::NAN
                    } else {
                        f64::from(rng.random_range(0..levels)) * 0.5
                    }
                })
            })
            .collect();
        let y: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let params = TrainParams {
            eta: 0.3,
            n_estimators: 1,
            max_depth: rng.random_range(1..=2),
            scale_pos_weight: [1.0, 0.6][rng.random_range(0..2)],
            reg_lambda: [1.0, 0.5][rng.random_range(0..2)],
            gamma: [1e-6, 0.05][rng.random_range(0..2)],
            min_child_weight: [0.0, 0.5][rng.random_range(0..2)],
            ..Default::default()
        };
        // first-round gradients at p = 0.5
        let w = |l: u8| if l == 1 { params.scale_pos_weight } else { 1.0 };
        let g: Vec<f64> = y.iter().map(|&l| (0.5 - f64::from(l)) * w(l)).collect();
        let h: Vec<f64> = y.iter().map(|&l| 0.25 * w(l)).collect();
        let want = oracle_tree(
            &x,
            &g,
            &h,
            &OracleParams {
                lambda: params.reg_lambda,
                gamma: params.gamma,
                mcw: params.min_child_weight,
                depth: params.max_depth,
            },
        );
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let cols = vec!["a".to_string(), "b".to_string()];
        let model = gbdt::train(&cols, &Samples::new(rows, y).unwrap(), &params, None)
            .map_err(|e| format!("case {case}: {e}"))?
            .model;
        ensure(model.trees.len() == 1, || format!("case {case}: {} trees", model.trees.len()))?;
        compare_trees(&model.trees[0].nodes, &want).map_err(|e| format!("case {case}: {e}"))?;
        splits += want.iter().filter(|n| matches!(n, ONode::Split { .. })).count();
    }
    Ok(format!("200 cases match ({splits} splits checked)"))
}

// 4 -------------------------------------------------------------------------

fn pairwise_auc(p: &[f64], y: &[u8]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..p.len() {
        for j in 0..p.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                if p[i] > p[j] {
                    wins += 1.0;
                } else if p[i] == p[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < 1000 {
        // coarse scores on some instances force many ties
        let levels = [5u32, 50, 1_000_000][done % 3];
        let p: Vec<f64> = (0..200).map(|_| f64::from(rng.random_range(0..levels)) / f64::from(levels)).collect();
        let y: Vec<u8> = (0..200).map(|_| u8::from(rng.random_bool(0.5))).collect();
        if !y.contains(&0) || !y.contains(&1) {
            continue;
        }
        let a = metrics::auc(&p, &y).map_err(|e| e.to_string())?;
        worst = worst.max((a - pairwise_auc(&p, &y)).abs());
        done += 1;
    }
    ensure(worst <= AUC_TOL, || format!("max deviation {worst:e}"))?;
    Ok(format!("1000 instances, max deviation {worst:e}"))
}

// 5 -------------------------------------------------------------------------

fn monotone_loss() -> Outcome {
    let (matrix, _) = planted_matrix(&SynthConfig::default(), vec![1]);
    let days = matrix.days();
    let idx = matrix.rows_on(&days[..20]);
    let samples = Samples::new(
        idx.iter().map(|&i| matrix.rows[i].as_slice()).collect(),
        idx.iter().map(|&i| matrix.labels[i]).collect(),
    )
    .unwrap();
    let params = TrainParams {
        eta: 0.01,
        gamma: 0.0,
        n_estimators: 300,
        ..Default::default()
    };
    let t = gbdt::train(&matrix.columns, &samples, &params, None).map_err(|e| e.to_string())?;
    let losses: Vec<f64> = t.history.iter().map(|r| r.train_logloss).collect();
    ensure(losses.len() == 300, || format!("{} rounds", losses.len()))?;
    let worst = losses.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    ensure(worst <= LOSS_RISE_TOL, || format!("loss rose by {worst:e}"))?;
    Ok(format!(
        "{} rows, loss {:.6} -> {:.6}, largest step {worst:e}",
        idx.len(),
        losses[0],
        losses[299]
    ))
}

// 6 -------------------------------------------------------------------------

fn bars_for(days: usize, flat: bool, seed: u64) -> BarSeries {
    if !flat {
        return synth::generate(&SynthConfig {
            days,
            seed,
            ..Default::default()
        })
        .series(session_end());
    }
    let data = synth::generate(&SynthConfig {
        days,
        seed,
        ..Default::default()
    });
    let bars: Vec<Bar> = data
        .bars
        .into_iter()
        .map(|b| Bar {
            close: b.open,
            high: b.open,
            low: b.open,
            ..b
        })
        .collect();
    BarSeries::from_bars(bars, NaiveTime::from_hms_opt(10, 30, 0).unwrap(), session_end())
        .unwrap()
        .0
}

fn antisymmetry() -> Outcome {
    let series = bars_for(5, false, 6);
    let windows: Vec<NaiveDateTime> = series.bars().iter().map(|b| b.timestamp).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let total = |p: &[u8], s: &BarSeries, f: Frequency| -> Result<Decimal, String> {
        Ok(backtest::simulate_predictions(&windows, p, s, 100, f)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|t| t.pnl)
            .sum())
    };
    for i in 0..1000 {
        let p: Vec<u8> = windows.iter().map(|_| u8::from(rng.random_bool(0.5))).collect();
        let not_p: Vec<u8> = p.iter().map(|v| 1 - v).collect();
        let f = if i % 2 == 0 { Frequency::PerBar } else { Frequency::FirstBarOfDay };
        let (a, b) = (total(&p, &series, f)?, total(&not_p, &series, f)?);
        ensure(a + b == Decimal::ZERO, || format!("vector {i}: {a} + {b} != 0"))?;
    }
    let flat = bars_for(5, true, 6);
    for i in 0..100 {
        let p: Vec<u8> = windows.iter().map(|_| u8::from(rng.random_bool(0.5))).collect();
        let t = total(&p, &flat, Frequency::PerBar)?;
        ensure(t == Decimal::ZERO, || format!("flat market strategy {i} made {t}"))?;
    }
    let ledger = walkforward::PredictionLedger {
        entries: windows
            .iter()
            .map(|&w| walkforward::LedgerEntry {
                window: w,
                probability: 0.7,
                prediction: 1,
                label: 1,
            })
            .collect(),
        threshold: 0.5,
    };
    let r = backtest::run_backtest(&ledger, &flat, &Default::default()).map_err(|e| e.to_string())?;
    ensure(
        r.total_pnl.is_zero() && r.baseline.model_totals.iter().all(|t| t.is_zero()),
        || "flat market baseline is not zero".into(),
    )?;
    Ok("1000 vectors antisymmetric, flat market totals 0".into())
}

// 7 -------------------------------------------------------------------------

fn collect_files(dir: &Path, base: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(&path, base, out);
        } else {
            let rel = path.strip_prefix(base).unwrap().to_string_lossy().into_owned();
            out.insert(rel, fs::read(&path).unwrap());
        }
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let synth = SynthConfig {
        days: 16,
        ..Default::default()
    };
    let mut cfg: RunConfig = pipeline::write_demo(tmp.path(), &synth).map_err(|e| e.to_string())?;
    cfg.walkforward.train_days = 8;
    cfg.train.n_estimators = 60;
    cfg.persist_models = true;
    let mut runs = Vec::new();
    for name in ["run_a", "run_b"] {
        let mut c = cfg.clone();
        c.paths.output = tmp.path().join(name);
        pipeline::run_all(&c).map_err(|e| e.to_string())?;
        let mut files = BTreeMap::new();
        collect_files(&c.paths.output, &c.paths.output, &mut files);
        runs.push(files);
    }
    let (a, b) = (&runs[0], &runs[1]);
    ensure(a.keys().eq(b.keys()), || "different file sets".into())?;
    for (name, bytes) in a {
        ensure(&b[name] == bytes, || format!("{name} differs"))?;
    }
    ensure(a.contains_key("equity.svg"), || "no SVG written".into())?;
    Ok(format!("{} artifacts byte-identical", a.len()))
}

// 8 -------------------------------------------------------------------------

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn feature_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for i in 0..10_000 {
        let n = rng.random_range(1..=40);
        let scale = [1.0, 1e3, 1e-3, 1e6][i % 4];
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.2) {
                    f64::from(rng.random_range(-3..=3))
                } else {
                    rng.random_range(-1.0..1.0) * scale
                }
            })
            .collect();
        let s = Stats::of(&values).unwrap();
        ensure(s.min <= s.mean && s.mean <= s.max, || format!("window {i}: mean out of range"))?;
        ensure(rel_close(s.sum, s.mean * n as f64, SUM_REL_TOL) || s.sum.abs() < 1e-9 * scale, || {
            format!("window {i}: sum {} vs mean*count {}", s.sum, s.mean * n as f64)
        })?;
        ensure(rel_close(s.var, s.std * s.std, VAR_REL_TOL) || s.var == 0.0, || {
            format!("window {i}: var {} vs std^2 {}", s.var, s.std * s.std)
        })?;
    }

    // lag columns against a lag-free build, exhaustively
    let cfg = SynthConfig {
        days: 6,
        ..Default::default()
    };
    let data = synth::generate(&cfg);
    let series = data.series(session_end());
    let reg = sentiment::demo_registry();
    let tweets = scored(data.tweets, &reg);
    let fc = |lags: Vec<usize>| FeatureConfig {
        scorers: Some(vec!["afinn".into(), "valence".into()]),
        tweet_attrs: vec![features::TweetAttr::WordCount, features::TweetAttr::Like],
        lags,
        ..Default::default()
    };
    let plain = features::assemble(&tweets, &series, &reg, &fc(vec![])).unwrap().matrix;
    let lagged = features::assemble(&tweets, &series, &reg, &fc(vec![1, 2, 4])).unwrap().matrix;
    let base: HashMap<NaiveDateTime, &Vec<f64>> = plain.windows.iter().copied().zip(&plain.rows).collect();
    let width = plain.columns.len();
    let mut checked = 0usize;
    for (w, row) in lagged.windows.iter().zip(&lagged.rows) {
        ensure(row[..width].iter().zip(base[w].iter()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
            format!("{w}: base columns differ")
        })?;
        for (block, k) in [1i64, 2, 4].iter().enumerate() {
            let src = *w - chrono::Duration::minutes(5 * k);
            ensure(src.date() == w.date(), || format!("{w}: lag {k} crosses a day"))?;
            let want = base.get(&src).ok_or_else(|| format!("{w}: no row at {src}"))?;
            let got = &row[width * (block + 1)..width * (block + 2)];
            ensure(got.iter().zip(want.iter()).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                format!("{w}: lag {k} differs")
            })?;
            checked += width;
        }
    }

    // truncating the inputs at T never changes rows that end before T
    let full = features::assemble(&tweets, &series, &reg, &fc(vec![1, 2])).unwrap().matrix;
    let all_windows: Vec<NaiveDateTime> = series.bars().iter().map(|b| b.timestamp).collect();
    for _ in 0..50 {
        let cut = all_windows[rng.random_range(0..all_windows.len())];
        let limit = cut + chrono::Duration::minutes(5);
        let part: Vec<ScoredTweet> = tweets.iter().filter(|t| t.tweet.local_time < limit).cloned().collect();
        let trunc = features::assemble(&part, &series.truncated(cut), &reg, &fc(vec![1, 2])).unwrap().matrix;
        let expect: Vec<usize> = (0..full.len()).filter(|&i| full.windows[i] < cut).collect();
        ensure(trunc.len() == expect.len(), || {
            format!("cut {cut}: {} rows, expected {}", trunc.len(), expect.len())
        })?;
        for (j, &i) in expect.iter().enumerate() {
            let same = trunc.windows[j] == full.windows[i]
                && trunc.labels[j] == full.labels[i]
                && trunc.rows[j].iter().zip(&full.rows[i]).all(|(a, b)| a.to_bits() == b.to_bits());
            ensure(same, || format!("cut {cut}: row {} changed", full.windows[i]))?;
        }
    }
    Ok(format!("10000 windows, {checked} lag cells, 50 truncation points"))
}

// 9 -------------------------------------------------------------------------

fn fuzz_text(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 24] = [
        "ação", "PETR4", "alta", " ", "  ", "\t", "\n", "https://t.co/x1", "http://a.b/c?d=1", "@user_1", "@", "#PETR4",
        "😀", "🚀🚀", "!!!", "...", "R$", "12,5%", "ç", "Ü", "don't", "-", "www", "é",
    ];
    let n = rng.random_range(0..14);
    let mut s = String::new();
    for _ in 0..n {
        if rng.random_bool(0.15) {
            s.push(char::from_u32(rng.random_range(0x20..0x2FFF)).unwrap_or('?'));
        } else {
            s.push_str(PIECES[rng.random_range(0..PIECES.len())]);
        }
        if rng.random_bool(0.5) {
            s.push(' ');
        }
    }
    s
}

fn cleaning_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let cfg = CleaningConfig::default();
    let mut raws = Vec::new();
    let t0 = chrono::DateTime::from_timestamp(1_610_000_000, 0).unwrap();
    for i in 0..10_000 {
        let s = fuzz_text(&mut rng);
        let once = corpus::clean_text(&s, &cfg);
        let twice = corpus::clean_text(&once, &cfg);
        ensure(once == twice, || format!("string {i} {s:?}: {once:?} then {twice:?}"))?;
        let created_at = t0 + chrono::Duration::seconds(rng.random_range(0..50));
        let text = if rng.random_bool(0.2) && !raws.is_empty() {
            let prev: &RawTweet = &raws[rng.random_range(0..raws.len())];
            prev.text.clone()
        } else {
            s
        };
        raws.push(RawTweet {
            created_at,
            text,
            like: 0,
            quote: 0,
            reply: 0,
            retweet: 0,
            user_followers: 0,
            user_following: 0,
            user_tweets: 0,
            user_listed: 0,
        });
    }

    let distinct: HashSet<_> = raws.iter().map(|t| (t.created_at, t.text.clone())).collect();
    let deduped = corpus::dedup(raws.clone());
    let kept_pairs: HashSet<_> = deduped.iter().map(|t| (t.created_at, t.text.clone())).collect();
    ensure(kept_pairs.len() == deduped.len(), || "dedup left a duplicate pair".into())?;
    ensure(kept_pairs == distinct, || "dedup lost a distinct pair".into())?;

    let (kept, stats) = corpus::prepare(raws, &cfg, &Identity).map_err(|e| e.to_string())?;
    let kept_keys: HashSet<_> = kept.iter().map(|t| (t.raw.created_at, t.raw.text.clone())).collect();
    for t in &deduped {
        let c = corpus::clean_text(&t.text, &cfg);
        let passes = c.split_whitespace().count() >= 3 && c.chars().count() >= 20;
        ensure(passes == kept_keys.contains(&(t.created_at, t.text.clone())), || {
            format!("filter disagrees on {:?}", t.text)
        })?;
    }
    Ok(format!(
        "10000 strings idempotent; {} distinct, {} pass the filter",
        stats.after_dedup, stats.kept
    ))
}

// 10 ------------------------------------------------------------------------

fn class_balance_format() -> Outcome {
    let b = features::class_balance(139_885, 107_718);
    ensure(b.up_percent == "56.5%" && b.down_percent == "43.5%", || b.to_string())?;
    let line = b.to_string();
    ensure(line.contains("56.5%") && line.contains("43.5%"), || line.clone())?;
    Ok(line)
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("comparison arithmetic", comparison_arithmetic),
        ("planted-signal end to end", planted_signal),
        ("gbdt oracle equivalence", gbdt_oracle),
        ("auc equivalence", auc_oracle),
        ("monotone training loss", monotone_loss),
        ("backtest antisymmetry", antisymmetry),
        ("pipeline determinism", determinism),
        ("feature integrity", feature_integrity),
        ("cleaning suite", cleaning_suite),
        ("class balance format", class_balance_format),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
