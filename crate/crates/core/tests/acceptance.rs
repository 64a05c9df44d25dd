//! Acceptance checks, one per numbered criterion. Each prints a single
//! `criterion N: PASS|FAIL ...` line and the process exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use cyberscore::cluster::{
    balanced_score, build_similarity, entropy_sum, run_grid, ClusterAssignment, ClusterMethod,
    Thresholds,
};
use cyberscore::events::{car, welch_test, TradingCalendar};
use cyberscore::pipeline::{run_stage, Params, RunConfig, Stage};
use cyberscore::portfolio::{quantile_sort, CapTiming, ReturnObs, ReturnsPanel};
use cyberscore::pricing::{
    bs_posteriors, fama_macbeth, fe_determinants, grs_test, posteriors_from_log_ml, FactorPanel,
    FeData, FeSpec, FmConfig, KMode,
};
use cyberscore::score::{
    score_filing, Filing, KnowledgeBase, RiskDictionary, ScoreHistory, ScoreKind,
};
use cyberscore::stats::trend_slope;
use cyberscore::synth::{generate, SynthConfig};
use cyberscore::textprep::Paragraph;
use cyberscore::{Month, SuperTacticMap, Tactic};

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample::<f64, _>(StandardNormal)
}

fn month(i: i64) -> Month {
    Month::new(2001, 1).unwrap().offset(i)
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 1

/// Four blocks of 30 unit vectors: a block axis, a shared direction, and
/// noise orthogonal to both.
fn planted_blocks(seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    const DIM: usize = 64;
    let mut r = rng(seed);
    let mut vectors = Vec::new();
    let mut truth = Vec::new();
    for g in 0..4 {
        for _ in 0..30 {
            let mut v = vec![0.0; DIM];
            v[g] = 1.0;
            v[4] = 0.3;
            for x in &mut v[5..] {
                *x = 0.05 * normal(&mut r);
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            vectors.push(v.into_iter().map(|x| x / n).collect());
            truth.push(g);
        }
    }
    (vectors, truth)
}

/// Share of items whose predicted cluster maps to their true block, under
/// the best injective relabeling.
fn label_agreement(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let mut conf = vec![vec![0usize; kp]; kt];
    for (&p, &t) in pred.iter().zip(truth) {
        conf[t][p] += 1;
    }
    fn best(conf: &[Vec<usize>], t: usize, used: &mut Vec<bool>) -> usize {
        if t == conf.len() {
            return 0;
        }
        let mut out = best(conf, t + 1, used);
        for p in 0..used.len() {
            if !used[p] {
                used[p] = true;
                out = out.max(conf[t][p] + best(conf, t + 1, used));
                used[p] = false;
            }
        }
        out
    }
    best(&conf, 0, &mut vec![false; kp]) as f64 / pred.len() as f64
}

fn criterion_1() -> Outcome {
    let grid = [
        ClusterMethod::Kmeans { k: 4 },
        ClusterMethod::Louvain,
        ClusterMethod::Spectral { k: 4, egn: 4 },
        ClusterMethod::Spectral { k: 4, egn: 6 },
    ];
    let start = Instant::now();
    let mut hits = [0usize; 4];
    for seed in 0..50 {
        let (vectors, truth) = planted_blocks(seed);
        let names = (0..vectors.len()).map(|i| i.to_string()).collect();
        let s = build_similarity(&vectors, names).unwrap();
        for i in 0..s.n() {
            for j in 0..i {
                let c = s.get(i, j);
                if truth[i] == truth[j] {
                    assert!(c >= 0.7, "seed {seed}: within-block cosine {c}");
                } else {
                    assert!(c <= 0.2, "seed {seed}: across-block cosine {c}");
                }
            }
        }
        let rows = run_grid(&vectors, &s, &truth, &grid, Thresholds::default(), seed).unwrap();
        for (h, row) in hits.iter_mut().zip(&rows) {
            if label_agreement(row.assignment.labels(), &truth) >= 0.95 {
                *h += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "seeds with >= 95% agreement of 50: kmeans {}, louvain {}, spectral(egn=4) {}, spectral(egn=6) {}; {:.2?}",
        hits[0], hits[1], hits[2], hits[3], elapsed
    );
    verdict(
        hits.iter().all(|&h| h * 100 >= 95 * 50) && elapsed < Duration::from_secs(5),
        detail,
    )
}

// ---------------------------------------------------------------- 2

fn brute_entropy(clusters: &[usize], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut seen: Vec<usize> = labels.to_vec();
    seen.sort_unstable();
    seen.dedup();
    for &l in &seen {
        let members: Vec<usize> = clusters
            .iter()
            .zip(labels)
            .filter(|(_, &x)| x == l)
            .map(|(&c, _)| c)
            .collect();
        let n = members.len() as f64;
        let mut cs = members.clone();
        cs.sort_unstable();
        cs.dedup();
        for c in cs {
            let p = members.iter().filter(|&&m| m == c).count() as f64 / n;
            total -= p * p.ln();
        }
    }
    total
}

fn brute_balance(clusters: &[usize]) -> f64 {
    let k = clusters.iter().max().unwrap() + 1;
    let counts: Vec<f64> = (0..k)
        .map(|c| clusters.iter().filter(|&&x| x == c).count() as f64)
        .filter(|&n| n > 0.0)
        .collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    (counts.iter().map(|n| (n - mean).powi(2)).sum::<f64>() / counts.len() as f64).sqrt()
}

fn criterion_2() -> Outcome {
    // 14 tactics, 8 paragraphs each
    let labels: Vec<usize> = (0..14).flat_map(|t| [t; 8]).collect();
    let pure = ClusterAssignment::from_raw(&labels.iter().map(|t| t % 4).collect::<Vec<_>>());
    let e_pure = entropy_sum(&pure, &labels).unwrap();
    let spread = ClusterAssignment::from_raw(&(0..labels.len()).map(|i| i % 4).collect::<Vec<_>>());
    let e_uniform = entropy_sum(&spread, &labels).unwrap();
    let target = 14.0 * 4f64.ln();
    let equal = ClusterAssignment::from_raw(&(0..120).map(|i| i % 4).collect::<Vec<_>>());
    let b_equal = balanced_score(&equal);

    let mut worst = 0.0f64;
    for seed in 0..200 {
        let mut r = rng(seed);
        let n = r.random_range(20..200);
        let k = r.random_range(1..8);
        let raw: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let lab: Vec<usize> = (0..n).map(|_| r.random_range(0..14)).collect();
        let a = ClusterAssignment::from_raw(&raw);
        let dense = a.labels().to_vec();
        worst = worst
            .max((entropy_sum(&a, &lab).unwrap() - brute_entropy(&dense, &lab)).abs())
            .max((balanced_score(&a) - brute_balance(&dense)).abs());
    }
    verdict(
        e_pure == 0.0 && (e_uniform - target).abs() <= 1e-9 && b_equal == 0.0 && worst <= 1e-12,
        format!(
            "pure {e_pure}, uniform off by {:.1e}, equal-count balance {b_equal}, brute-force gap {worst:.1e}",
            (e_uniform - target).abs()
        ),
    )
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    const DIM: usize = 64;
    let mut r = rng(3);
    let uniform_vec = |r: &mut ChaCha8Rng| -> Vec<f64> { (0..DIM).map(|_| r.random()).collect() };
    let kb_vectors: Vec<Vec<f64>> = (0..785).map(|_| uniform_vec(&mut r)).collect();
    let tactics: Vec<Tactic> = (0..785).map(|i| Tactic::ALL[i % 14]).collect();
    let kb = KnowledgeBase::new(&kb_vectors, tactics).unwrap();
    let groups = SuperTacticMap::reference_grouping();
    let dict = RiskDictionary::reference();
    let plain = ["network", "customer", "revenue", "system", "vendor", "data"];
    let risky = ["risk", "uncertainty", "jeopardize", "doubt"];

    let mut dominated = 0usize;
    let mut in_range = true;
    for f in 0..200 {
        let n_par = r.random_range(1..15);
        let paragraphs = (0..n_par)
            .map(|p| {
                let tokens = (0..12)
                    .map(|_| {
                        let pool: &[&str] = if r.random_bool(0.05) { &risky } else { &plain };
                        pool[r.random_range(0..pool.len())].to_string()
                    })
                    .collect();
                Paragraph::new(format!("f{f}"), p, tokens)
            })
            .collect();
        let filing = Filing {
            firm_id: format!("firm{f}"),
            filing_date: date(2015, 3, 1),
            paragraphs,
            vectors: (0..n_par).map(|_| uniform_vec(&mut r)).collect(),
        };
        let rows = score_filing(&filing, &kb, &groups, &dict, 0.99).unwrap();
        let overall = rows
            .iter()
            .find(|row| row.kind == ScoreKind::Overall)
            .unwrap()
            .value;
        in_range &= rows.iter().all(|row| (-1.0..=1.0).contains(&row.value));
        if rows.iter().all(|row| row.value <= overall) {
            dominated += 1;
        }
    }
    verdict(
        dominated == 200 && in_range,
        format!("overall dominates in {dominated}/200 filings; all scores in [-1, 1]: {in_range}"),
    )
}

// ---------------------------------------------------------------- 4

/// A filed score per firm and year, dated Dec 15 of the previous year, so
/// every formation in year `y` uses the score drawn for `y`.
fn yearly_scores(r: &mut ChaCha8Rng, n_firms: usize, years: i32) -> Vec<Vec<f64>> {
    (0..years)
        .map(|_| (0..n_firms).map(|_| r.random::<f64>()).collect())
        .collect()
}

fn history(scores: &[Vec<f64>]) -> ScoreHistory {
    ScoreHistory::from_rows(scores.iter().enumerate().flat_map(|(y, row)| {
        row.iter()
            .enumerate()
            .map(move |(i, &s)| (format!("F{i:03}"), date(2000 + y as i32, 12, 15), s))
    }))
}

fn sort_world(seed: u64) -> Vec<f64> {
    const FIRMS: usize = 200;
    const MONTHS: i64 = 180;
    let mut r = rng(seed);
    let scores = yearly_scores(&mut r, FIRMS, 15);
    // quintile of each firm in each year, 0..5
    let quintile: Vec<Vec<usize>> = scores
        .iter()
        .map(|row| {
            let mut order: Vec<usize> = (0..FIRMS).collect();
            order.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
            let mut q = vec![0; FIRMS];
            for (rank, &i) in order.iter().enumerate() {
                q[i] = rank * 5 / FIRMS;
            }
            q
        })
        .collect();
    let base_cap: Vec<f64> = (0..FIRMS).map(|_| normal(&mut r) + 5.0).collect();
    let mut panel = ReturnsPanel::new();
    // Dec 2000 supplies the caps for the first formation
    for t in -1..MONTHS {
        let m = month(t);
        let mkt = 0.006 + 0.045 * normal(&mut r);
        let year = (t.max(0) / 12) as usize;
        for i in 0..FIRMS {
            let ret = 0.001 * (quintile[year][i] + 1) as f64 + mkt + 0.05 * normal(&mut r);
            let cap = (base_cap[i] + 0.05 * normal(&mut r)).exp();
            panel
                .insert(format!("F{i:03}"), m, ReturnObs::new(ret, Some(cap)))
                .unwrap();
        }
    }
    let series = quantile_sort(&panel, &history(&scores), 5, CapTiming::default()).unwrap();
    assert!(series.iter().all(|s| s.len() == MONTHS as usize));
    series.iter().map(|s| s.mean()).collect()
}

fn criterion_4() -> Outcome {
    let mut avg = [0.0; 5];
    for seed in 0..100 {
        for (a, m) in avg.iter_mut().zip(sort_world(seed)) {
            *a += m / 100.0;
        }
    }
    let increasing = avg.windows(2).all(|w| w[1] > w[0]);
    let spread = avg[4] - avg[0];
    verdict(
        increasing && (spread - 0.004).abs() <= 0.15 * 0.004,
        format!(
            "quintile means (%/mo) {:?}; P5-P1 {:.4}%/mo against 0.4%",
            avg.map(|m| (m * 1e4).round() / 1e2),
            spread * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 5

const GAMMA: f64 = 0.0004;

/// Returns `beta_i Mkt + GAMMA s_i + e` with persistent, yearly refiled scores.
fn fm_world(seed: u64) -> (f64, f64) {
    const FIRMS: usize = 100;
    const MONTHS: i64 = 120;
    let mut r = rng(seed);
    let base: Vec<f64> = (0..FIRMS).map(|_| r.random::<f64>()).collect();
    let scores: Vec<Vec<f64>> = (0..10)
        .map(|_| base.iter().map(|b| b + 0.05 * normal(&mut r)).collect())
        .collect();
    let beta: Vec<f64> = (0..FIRMS).map(|_| r.random_range(0.5..1.5)).collect();
    let cap: Vec<f64> = (0..FIRMS).map(|_| normal(&mut r) + 5.0).collect();
    let mut panel = ReturnsPanel::new();
    let mut mkt = Vec::new();
    for t in 0..MONTHS {
        let m = 0.006 + 0.045 * normal(&mut r);
        mkt.push(m);
        let year = (t / 12) as usize;
        for i in 0..FIRMS {
            let ret = beta[i] * m + GAMMA * scores[year][i] + 0.05 * normal(&mut r);
            let c = (cap[i] + 0.05 * normal(&mut r)).exp();
            panel
                .insert(format!("F{i:03}"), month(t), ReturnObs::new(ret, Some(c)))
                .unwrap();
        }
    }
    let factors = FactorPanel::new(
        (0..MONTHS).map(month).collect(),
        vec!["Mkt".into()],
        vec![mkt],
        None,
    )
    .unwrap();
    let config = FmConfig {
        window: 24,
        n_portfolios: 20,
        ..FmConfig::new(&["Mkt"], true)
    };
    let fit = fama_macbeth(&panel, &history(&scores), &factors, &config).unwrap();
    let t = fit.test("Cyber").unwrap();
    (t.mean, t.std_error)
}

fn criterion_5() -> Outcome {
    let covered = (0..500)
        .filter(|&seed| {
            let (est, se) = fm_world(seed);
            (est - GAMMA).abs() <= 2.0 * se
        })
        .count();
    verdict(
        covered * 100 >= 93 * 500,
        format!("gamma within 2 SE in {covered}/500 seeds"),
    )
}

// ---------------------------------------------------------------- 6

fn grs_oracle(p: &[Vec<f64>; 2], f: &[f64]) -> f64 {
    let t = f.len() as f64;
    let (n, k) = (2.0, 1.0);
    let mf = f.iter().sum::<f64>() / t;
    let sff = f.iter().map(|x| (x - mf).powi(2)).sum::<f64>();
    let mut alpha = [0.0; 2];
    let mut resid = [vec![], vec![]];
    for j in 0..2 {
        let my = p[j].iter().sum::<f64>() / t;
        let b = f
            .iter()
            .zip(&p[j])
            .map(|(x, y)| (x - mf) * (y - my))
            .sum::<f64>()
            / sff;
        alpha[j] = my - b * mf;
        resid[j] = f
            .iter()
            .zip(&p[j])
            .map(|(x, y)| y - alpha[j] - b * x)
            .collect();
    }
    // unbiased residual covariance, explicit 2x2 inverse
    let c = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (t - k - 1.0);
    let (s11, s12, s22) = (
        c(&resid[0], &resid[0]),
        c(&resid[0], &resid[1]),
        c(&resid[1], &resid[1]),
    );
    let det = s11 * s22 - s12 * s12;
    let quad = (s22 * alpha[0] * alpha[0] - 2.0 * s12 * alpha[0] * alpha[1]
        + s11 * alpha[1] * alpha[1])
        / det;
    let omega = sff / t;
    (t / n) * ((t - n - k) / (t - k - 1.0)) * quad / (1.0 + mf * mf / omega)
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut r = rng(seed);
        let t = 60;
        let f: Vec<f64> = (0..t).map(|_| 0.005 + 0.04 * normal(&mut r)).collect();
        let p = [0.002, -0.001].map(|a| {
            f.iter()
                .map(|x| a + 0.9 * x + 0.02 * normal(&mut r))
                .collect::<Vec<f64>>()
        });
        let got = grs_test(&p, &[&f]).unwrap().statistic;
        let want = grs_oracle(&p, &f);
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }

    let (t, n, k) = (180, 10, 5);
    let mut rejections = 0usize;
    for rep in 0..2000u64 {
        let mut r = rng(10_000 + rep);
        let f: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..t).map(|_| 0.005 + 0.04 * normal(&mut r)).collect())
            .collect();
        let p: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let b: Vec<f64> = (0..k).map(|_| r.random::<f64>()).collect();
                (0..t)
                    .map(|i| (0..k).map(|j| b[j] * f[j][i]).sum::<f64>() + 0.02 * normal(&mut r))
                    .collect()
            })
            .collect();
        if grs_test(&p, &f).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    let size = rejections as f64 / 2000.0;
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-10 && (0.03..=0.07).contains(&size) && elapsed < Duration::from_secs(60),
        format!(
            "oracle gap {worst:.1e}; null rejection rate {:.2}%; {elapsed:.2?}",
            size * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 7

fn bayes_world(seed: u64) -> FactorPanel {
    const T: i64 = 360;
    let mut r = rng(seed);
    let mkt_d = Normal::new(0.006, 0.045).unwrap();
    let f1_d = Normal::new(0.01, 0.03).unwrap();
    let noise = Normal::new(0.0, 0.03).unwrap();
    let loadings = [0.3, 0.6, 0.9, 1.2];
    let mut cols = vec![Vec::new(); 1 + 1 + loadings.len()];
    for _ in 0..T {
        let m = mkt_d.sample(&mut r);
        cols[0].push(m);
        cols[1].push(f1_d.sample(&mut r));
        for (j, b) in loadings.iter().enumerate() {
            cols[2 + j].push(b * m + noise.sample(&mut r));
        }
    }
    let names = ["Mkt", "F1", "F2", "F3", "F4", "F5"]
        .map(String::from)
        .to_vec();
    FactorPanel::new((0..T).map(month).collect(), names, cols, None).unwrap()
}

fn criterion_7() -> Outcome {
    let uniform = posteriors_from_log_ml(&[-3.25; 32]).unwrap();
    let exactly_uniform = uniform.iter().all(|&p| p == 1.0 / 32.0);
    let mut worst_sum = 0.0f64;
    let mut passing = 0usize;
    let cands = ["F1", "F2", "F3", "F4", "F5"];
    for seed in 0..50 {
        let panel = bayes_world(seed);
        let post = bs_posteriors(&panel, "Mkt", &cands, 1.25, KMode::Original, Some(24)).unwrap();
        for point in &post.path {
            worst_sum = worst_sum.max((point.probabilities.iter().sum::<f64>() - 1.0).abs());
        }
        let path = post.cumulative_path("F1").unwrap();
        let tail = &path[path.len() - 120..];
        if *path.last().unwrap() > 0.9 && trend_slope(tail) >= 0.0 {
            passing += 1;
        }
    }
    verdict(
        worst_sum <= 1e-9 && exactly_uniform && passing * 100 >= 90 * 50,
        format!(
            "max |sum - 1| {worst_sum:.1e}; equal-ML uniform: {exactly_uniform}; F1 ends > 0.9 with non-decreasing trend in {passing}/50 seeds"
        ),
    )
}

// ---------------------------------------------------------------- 8

fn event_fixture(
    seed: u64,
    exact: bool,
) -> (
    BTreeMap<NaiveDate, f64>,
    BTreeMap<NaiveDate, f64>,
    TradingCalendar,
) {
    let mut r = rng(seed);
    let days: Vec<NaiveDate> = (0..400)
        .map(|i| date(2019, 1, 1) + chrono::Duration::days(i))
        .collect();
    let market: BTreeMap<NaiveDate, f64> =
        days.iter().map(|&d| (d, 0.01 * normal(&mut r))).collect();
    let asset = days
        .iter()
        .map(|&d| {
            let noise = if exact { 0.0 } else { 0.015 * normal(&mut r) };
            (d, 0.0004 + 1.3 * market[&d] + noise)
        })
        .collect();
    (asset, market, TradingCalendar::new(days).unwrap())
}

fn criterion_8() -> Outcome {
    let mut additivity = 0.0f64;
    let mut exact_car = 0.0f64;
    for seed in 0..20 {
        let (asset, market, cal) = event_fixture(seed, false);
        let event = cal.days()[350];
        let w = car(
            &asset,
            &market,
            &cal,
            event,
            &[(-5, 5), (-5, -1), (0, 0), (1, 5)],
            252,
        )
        .unwrap();
        additivity = additivity.max((w[0].car - (w[1].car + w[2].car + w[3].car)).abs());

        let (asset, market, cal) = event_fixture(seed, true);
        let w = car(
            &asset,
            &market,
            &cal,
            cal.days()[350],
            &[(-10, 10), (0, 1)],
            252,
        )
        .unwrap();
        exact_car = w.iter().fold(exact_car, |m, x| m.max(x.car.abs()));
    }

    let mut rejections = 0usize;
    for sim in 0..2000u64 {
        let mut r = rng(50_000 + sim);
        let a: Vec<f64> = (0..20).map(|_| 0.01 * normal(&mut r)).collect();
        let b: Vec<f64> = (0..35).map(|_| 0.03 * normal(&mut r)).collect();
        if welch_test(&a, &b).unwrap().p_value < 0.05 {
            rejections += 1;
        }
    }
    let size = rejections as f64 / 2000.0;
    verdict(
        additivity <= 1e-12 && exact_car <= 1e-12 && (0.03..=0.07).contains(&size),
        format!(
            "additivity gap {additivity:.1e}; exact-model |CAR| {exact_car:.1e}; Welch size {:.2}%",
            size * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    // 3 firms x 3 years, two regressors
    let mut r = rng(9);
    let firms: Vec<String> = ["A", "A", "A", "B", "B", "B", "C", "C", "C"]
        .map(String::from)
        .to_vec();
    let years = vec![2001, 2002, 2003, 2001, 2002, 2003, 2001, 2002, 2003];
    let x: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..9).map(|_| normal(&mut r)).collect())
        .collect();
    let y: Vec<f64> = (0..9)
        .map(|i| 0.5 * x[0][i] - 0.3 * x[1][i] + 0.1 * normal(&mut r))
        .collect();
    let data = FeData {
        firms,
        years,
        industries: vec!["I".into(); 9],
        y: y.clone(),
        names: vec!["x1".into(), "x2".into()],
        x: x.clone(),
    };
    let fit = fe_determinants(&data, FeSpec::FirmYear).unwrap();

    // balanced two-way within transform: v - firm mean - year mean + grand mean
    let demean = |v: &[f64]| -> Vec<f64> {
        let grand = v.iter().sum::<f64>() / 9.0;
        (0..9)
            .map(|i| {
                let (f, t) = (i / 3, i % 3);
                let fm = (0..3).map(|j| v[f * 3 + j]).sum::<f64>() / 3.0;
                let tm = (0..3).map(|g| v[g * 3 + t]).sum::<f64>() / 3.0;
                v[i] - fm - tm + grand
            })
            .collect()
    };
    let (yd, x1, x2) = (demean(&y), demean(&x[0]), demean(&x[1]));
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let (a11, a12, a22) = (dot(&x1, &x1), dot(&x1, &x2), dot(&x2, &x2));
    let (b1, b2) = (dot(&x1, &yd), dot(&x2, &yd));
    let det = a11 * a22 - a12 * a12;
    let oracle = [(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det];
    let gap = fit
        .coefficients
        .iter()
        .zip(oracle)
        .fold(0.0f64, |m, (c, o)| m.max((c - o).abs()));

    // persistent within-firm deviations in both x and the error
    let (mut clustered, mut plain) = (0.0, 0.0);
    for seed in 0..500 {
        let mut r = rng(90_000 + seed);
        let mut data = FeData {
            names: vec!["x".into()],
            x: vec![Vec::new()],
            ..Default::default()
        };
        for f in 0..40 {
            let (mut xv, mut e) = (normal(&mut r), normal(&mut r));
            for t in 0..10 {
                xv = 0.8 * xv + 0.6 * normal(&mut r);
                e = 0.8 * e + 0.6 * normal(&mut r);
                data.firms.push(format!("f{f}"));
                data.years.push(2001 + t);
                data.industries.push("I".into());
                data.x[0].push(xv);
                data.y.push(0.2 * xv + e);
            }
        }
        let fit = fe_determinants(&data, FeSpec::FirmYear).unwrap();
        clustered += fit.std_errors[0] / 500.0;
        plain += fit.std_errors_unclustered[0] / 500.0;
    }
    verdict(
        gap <= 1e-10 && clustered > plain,
        format!("oracle gap {gap:.1e}; mean clustered SE {clustered:.4} vs unclustered {plain:.4}"),
    )
}

// ---------------------------------------------------------------- 10

/// File name to contents.
type Tree = BTreeMap<String, Vec<u8>>;

fn read_tree(dir: &Path) -> Tree {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_file() {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, std::fs::read(&path).unwrap());
        }
    }
    out
}

/// `synth` then `report` into fixed directories; returns the time and every
/// file produced.
fn full_run(root: &Path) -> (Duration, Tree, Tree) {
    let data = root.join("data");
    let out = root.join("out");
    for d in [&data, &out] {
        if d.exists() {
            std::fs::remove_dir_all(d).unwrap();
        }
    }
    let start = Instant::now();
    generate(&SynthConfig::new(1))
        .unwrap()
        .write(&data)
        .unwrap();
    let params = Params {
        seed: Some(1),
        ..Params::default()
    };
    run_stage(Stage::Report, &RunConfig::new(&data, &out, params)).unwrap();
    (start.elapsed(), read_tree(&data), read_tree(&out))
}

fn criterion_10() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let (t1, data1, out1) = full_run(root.path());
    let (t2, data2, out2) = full_run(root.path());
    let differing: Vec<&String> = out1
        .keys()
        .chain(out2.keys())
        .filter(|k| out1.get(*k) != out2.get(*k))
        .collect();
    verdict(
        t1 < Duration::from_secs(60)
            && t2 < Duration::from_secs(60)
            && data1 == data2
            && differing.is_empty()
            && out1.len() > 10,
        format!(
            "runs took {t1:.1?} and {t2:.1?}; {} output files; inputs identical: {}; differing outputs: {differing:?}",
            out1.len(),
            data1 == data2
        ),
    )
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let mut failed = Vec::new();
    for (n, check) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {n}: FAIL ({detail})");
                failed.push(n);
            }
        }
    }
    if failed.is_empty() {
        println!("all criteria passed");
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
