//! Brute-force reference for the leaderboard table.
//!
//! Shares no code with the library: it parses the CSVs itself, enumerates
//! coalitions with `itertools::combinations`, and uses the factorial form of
//! the subset weights. Floating-point operations follow the documented
//! reduction order (ensemble = first pool member + mean deviation, sums left
//! to right, marginal contributions summed per coalition size before
//! weighting, coalitions lexicographic within a size, which for pools of at
//! most three models is also ascending bitmask order), so results can be
//! compared byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use itertools::Itertools;

type Task = (String, String, u32, String);

pub struct Fixture {
    levels: Vec<f64>,
    /// task -> model -> quantile values in level order
    forecasts: BTreeMap<Task, BTreeMap<String, Vec<f64>>>,
    truth: BTreeMap<(String, String), f64>,
}

pub fn load(forecasts: &Path, truth: &Path) -> Fixture {
    let mut rows: BTreeMap<Task, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(forecasts).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let task = (
            rec[1].to_string(),
            rec[2].to_string(),
            rec[3].parse().unwrap(),
            rec[4].to_string(),
        );
        rows.entry(task)
            .or_default()
            .entry(rec[0].to_string())
            .or_default()
            .push((rec[5].parse().unwrap(), rec[6].parse().unwrap()));
    }
    let mut levels = Vec::new();
    let forecasts = rows
        .into_iter()
        .map(|(task, models)| {
            let models = models
                .into_iter()
                .map(|(m, mut qs)| {
                    qs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                    levels = qs.iter().map(|q| q.0).collect();
                    (m, qs.into_iter().map(|q| q.1).collect())
                })
                .collect();
            (task, models)
        })
        .collect();
    let mut truth_map = BTreeMap::new();
    let mut rdr = csv::Reader::from_path(truth).unwrap();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        truth_map.insert(
            (rec[0].to_string(), rec[1].to_string()),
            rec[2].parse().unwrap(),
        );
    }
    Fixture {
        levels,
        forecasts,
        truth: truth_map,
    }
}

fn neg_wis(levels: &[f64], q: &[f64], y: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..levels.len() {
        let ind = if y <= q[k] { 1.0 } else { 0.0 };
        total += 2.0 * (ind - levels[k]) * (q[k] - y);
    }
    -(total / levels.len() as f64)
}

/// Mean ensemble of `members` (indices into `pool`) about the pool's first
/// member.
fn ensemble(pool: &[&Vec<f64>], members: &[usize]) -> Vec<f64> {
    let reference = pool[0];
    (0..reference.len())
        .map(|k| {
            let mut sum = 0.0;
            for &j in members {
                sum += pool[j][k] - reference[k];
            }
            reference[k] + sum * (1.0 / members.len() as f64)
        })
        .collect()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `(lasomo, lomo)` for every member of one task's pool.
fn task_importance(levels: &[f64], pool: &[&Vec<f64>], y: f64) -> Vec<(f64, f64)> {
    let n = pool.len();
    let score = |members: &[usize]| neg_wis(levels, &ensemble(pool, members), y);
    (0..n)
        .map(|i| {
            let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let mut lasomo = 0.0;
            for size in 1..n {
                let w =
                    factorial(size) * factorial(n - size - 1) / (factorial(n - 1) * (n - 1) as f64);
                let mut subtotal = 0.0;
                for s in others.iter().copied().combinations(size) {
                    let mut with: Vec<usize> = s.clone();
                    with.push(i);
                    with.sort();
                    subtotal += score(&with) - score(&s);
                }
                lasomo += w * subtotal;
            }
            let all: Vec<usize> = (0..n).collect();
            let lomo = score(&all) - score(&others);
            (lasomo, lomo)
        })
        .collect()
}

fn fill(cells: &mut [Vec<Option<f64>>], policy: &str) {
    let tasks = cells.first().map_or(0, |r| r.len());
    for t in 0..tasks {
        let present: Vec<f64> = cells.iter().filter_map(|r| r[t]).collect();
        let value = match policy {
            "drop" => None,
            "worst" => present.iter().copied().reduce(f64::min),
            "mean" => Some(present.iter().fold(0.0, |a, v| a + v) / present.len() as f64),
            other => panic!("unknown policy {other}"),
        };
        for row in cells.iter_mut() {
            if row[t].is_none() {
                row[t] = value;
            }
        }
    }
}

fn means(cells: &[Vec<Option<f64>>]) -> Vec<Option<f64>> {
    cells
        .iter()
        .map(|row| {
            let present: Vec<f64> = row.iter().flatten().copied().collect();
            (!present.is_empty())
                .then(|| present.iter().fold(0.0, |a, v| a + v) / present.len() as f64)
        })
        .collect()
}

fn ranks(models: &[String], values: &[Option<f64>]) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..models.len()).filter(|&m| values[m].is_some()).collect();
    order.sort_by(|&a, &b| {
        values[b]
            .unwrap()
            .partial_cmp(&values[a].unwrap())
            .unwrap()
            .then(models[a].cmp(&models[b]))
    });
    let mut out = vec![None; models.len()];
    for (r, m) in order.into_iter().enumerate() {
        out[m] = Some(r + 1);
    }
    out
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("NA".into(), |v| format!("{v:.16e}"))
}

/// The leaderboard CSV the `importance --table` command is expected to
/// write for `policy` (WIS, permutation weights).
pub fn table_csv(fx: &Fixture, policy: &str) -> String {
    let models: Vec<String> = fx
        .forecasts
        .values()
        .flat_map(|m| m.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let tasks: Vec<&Task> = fx
        .forecasts
        .iter()
        .filter(|(task, m)| {
            m.len() >= 2 && fx.truth.contains_key(&(task.1.clone(), task.3.clone()))
        })
        .map(|(task, _)| task)
        .collect();
    let width = tasks.len();
    let mut scores = vec![vec![None; width]; models.len()];
    let mut lasomo = vec![vec![None; width]; models.len()];
    let mut lomo = vec![vec![None; width]; models.len()];
    for (t, task) in tasks.iter().enumerate() {
        let y = fx.truth[&(task.1.clone(), task.3.clone())];
        let members = &fx.forecasts[*task];
        let ids: Vec<&String> = members.keys().collect();
        let pool: Vec<&Vec<f64>> = members.values().collect();
        let phis = task_importance(&fx.levels, &pool, y);
        for (k, id) in ids.iter().enumerate() {
            let m = models.iter().position(|x| x == *id).unwrap();
            scores[m][t] = Some(neg_wis(&fx.levels, pool[k], y));
            lasomo[m][t] = Some(phis[k].0);
            lomo[m][t] = Some(phis[k].1);
        }
    }
    let counts: Vec<usize> = scores.iter().map(|r| r.iter().flatten().count()).collect();
    for panel in [&mut scores, &mut lasomo, &mut lomo] {
        fill(panel, policy);
    }
    let (s, a, o) = (means(&scores), means(&lasomo), means(&lomo));
    let (rs, ra, ro) = (ranks(&models, &s), ranks(&models, &a), ranks(&models, &o));

    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&x, &y| match (s[x], s[y]) {
        (Some(p), Some(q)) => q.partial_cmp(&p).unwrap().then(models[x].cmp(&models[y])),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => models[x].cmp(&models[y]),
    });
    let rank = |r: Option<usize>| r.map_or("NA".into(), |r| r.to_string());
    let mut out = format!("# weights permutation, na policy {policy}\n");
    out.push_str("model,neg_wis,phi_lasomo,phi_lomo,n_predictions,pct_submitted,rank_neg_wis,rank_lasomo,rank_lomo\n");
    for m in order {
        let pct = counts[m] as f64 / width as f64 * 100.0;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            models[m],
            fmt(s[m]),
            fmt(a[m]),
            fmt(o[m]),
            counts[m],
            fmt(Some(pct)),
            rank(rs[m]),
            rank(ra[m]),
            rank(ro[m])
        ));
    }
    out
}
