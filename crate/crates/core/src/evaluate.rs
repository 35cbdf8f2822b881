//! Group quality measures: group correlation matrix, heterophily fraction,
//! NMI between labelings, and a planted-block graph generator.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extraction::MISC_LABEL;
use crate::simgraph::SimilarityGraph;

/// Document id → group label.
pub type Labeling = HashMap<String, String>;

/// Orders labels as `C1 < C2 < C10 < … < misc`: alphabetic prefix first,
/// then the numeric suffix by value; the residual label always last.
pub fn label_order(a: &str, b: &str) -> Ordering {
    fn key(s: &str) -> (bool, &str, Option<u64>, &str) {
        let split = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        let (prefix, digits) = s.split_at(split);
        (s == MISC_LABEL, prefix, digits.parse().ok(), s)
    }
    key(a).cmp(&key(b))
}

/// Mean correlation within and between groups. `values[k][l]` is `None`
/// only on the diagonal of a group with fewer than two members.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCorrelationMatrix {
    pub labels: Vec<String>,
    pub sizes: Vec<usize>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl GroupCorrelationMatrix {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, k: usize, l: usize) -> Option<f64> {
        self.values[k][l]
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Drops one group's row and column.
    pub fn without(&self, label: &str) -> GroupCorrelationMatrix {
        let keep: Vec<usize> = (0..self.len()).filter(|&k| self.labels[k] != label).collect();
        GroupCorrelationMatrix {
            labels: keep.iter().map(|&k| self.labels[k].clone()).collect(),
            sizes: keep.iter().map(|&k| self.sizes[k]).collect(),
            values: keep
                .iter()
                .map(|&k| keep.iter().map(|&l| self.values[k][l]).collect())
                .collect(),
        }
    }

    /// `label,<labels…>` header, 6 decimals, empty cell where undefined.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["label".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (k, row) in self.values.iter().enumerate() {
            let mut rec = vec![self.labels[k].clone()];
            rec.extend(row.iter().map(|v| v.map_or(String::new(), |x| format!("{x:.6}"))));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Entry `(k,l)` is the mean of `A_ij` over `i∈k`, `j∈l`, `i≠j`. Every node
/// of `corr` must be labeled; labels of unknown ids are rejected.
pub fn group_correlation(corr: &SimilarityGraph, grouping: &Labeling) -> Result<GroupCorrelationMatrix> {
    let ids = corr.node_ids();
    let known: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let mut mismatch: Vec<String> = ids
        .iter()
        .filter(|id| !grouping.contains_key(*id))
        .cloned()
        .collect();
    mismatch.extend(grouping.keys().filter(|k| !known.contains(k.as_str())).cloned());
    if !mismatch.is_empty() {
        mismatch.sort();
        return Err(Error::IdMismatch(mismatch));
    }
    let mut labels: Vec<String> = grouping.values().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if labels.is_empty() {
        return Err(Error::TooSmall {
            what: "groups".into(),
            needed: 1,
            got: 0,
        });
    }
    labels.sort_by(|a, b| label_order(a, b));
    let slot: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, id) in ids.iter().enumerate() {
        members[slot[grouping[id].as_str()]].push(i);
    }

    let g = labels.len();
    let pairs: Vec<(usize, usize)> = (0..g).flat_map(|k| (k..g).map(move |l| (k, l))).collect();
    let means: Vec<Option<f64>> = pairs
        .par_iter()
        .map(|&(k, l)| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for &i in &members[k] {
                let row = corr.row(i);
                for &j in &members[l] {
                    if i != j {
                        sum += row[j];
                        count += 1;
                    }
                }
            }
            (count > 0).then(|| sum / count as f64)
        })
        .collect();
    let mut values = vec![vec![None; g]; g];
    for (&(k, l), m) in pairs.iter().zip(means) {
        values[k][l] = m;
        values[l][k] = m;
    }
    Ok(GroupCorrelationMatrix {
        labels,
        sizes: members.iter().map(Vec::len).collect(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heterophily {
    pub label: String,
    pub fraction: f64,
}

/// For each column `k`, the share of off-diagonal cells `(l,k)` that are
/// `≥` the diagonal `(k,k)`. Groups with an undefined diagonal are skipped.
pub fn heterophily_fraction(gcm: &GroupCorrelationMatrix) -> Result<Vec<Heterophily>> {
    let g = gcm.len();
    if g < 2 {
        return Err(Error::TooSmall {
            what: "groups".into(),
            needed: 2,
            got: g,
        });
    }
    let mut out = Vec::with_capacity(g);
    for k in 0..g {
        let Some(diag) = gcm.values[k][k] else {
            log::warn!("group {} has fewer than two members; heterophily skipped", gcm.labels[k]);
            continue;
        };
        let at_least = (0..g)
            .filter(|&l| l != k)
            .filter(|&l| gcm.values[l][k].is_some_and(|v| v >= diag))
            .count();
        out.push(Heterophily {
            label: gcm.labels[k].clone(),
            fraction: at_least as f64 / (g - 1) as f64,
        });
    }
    Ok(out)
}

pub fn write_heterophily_csv(path: &Path, rows: &[Heterophily]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["label", "fraction"])?;
    for h in rows {
        w.write_record([h.label.clone(), format!("{:.6}", h.fraction)])?;
    }
    w.flush()?;
    Ok(())
}

/// Median of the values; mean of the two middle ones for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Denominator used to normalize mutual information.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NmiNormalization {
    #[default]
    Arithmetic,
    Geometric,
    Max,
    Min,
}

/// NMI with the arithmetic-mean denominator `(H(U)+H(V))/2`.
pub fn nmi(u: &Labeling, v: &Labeling) -> Result<f64> {
    nmi_with(u, v, NmiNormalization::Arithmetic)
}

pub fn nmi_with(u: &Labeling, v: &Labeling, norm: NmiNormalization) -> Result<f64> {
    let mut diff: Vec<String> = u
        .keys()
        .filter(|k| !v.contains_key(*k))
        .chain(v.keys().filter(|k| !u.contains_key(*k)))
        .cloned()
        .collect();
    if !diff.is_empty() {
        diff.sort();
        return Err(Error::IdMismatch(diff));
    }
    let n = u.len();
    if n == 0 {
        return Ok(1.0);
    }
    let mut joint: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut mu: BTreeMap<&str, usize> = BTreeMap::new();
    let mut mv: BTreeMap<&str, usize> = BTreeMap::new();
    for (id, a) in u {
        let b = v[id].as_str();
        *joint.entry((a.as_str(), b)).or_default() += 1;
        *mu.entry(a.as_str()).or_default() += 1;
        *mv.entry(b).or_default() += 1;
    }
    match (mu.len() == 1, mv.len() == 1) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let nf = n as f64;
    let entropy = |m: &BTreeMap<&str, usize>| -> f64 {
        m.values()
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let (hu, hv) = (entropy(&mu), entropy(&mv));
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| {
            let p = c as f64 / nf;
            p * (c as f64 * nf / (mu[a] as f64 * mv[b] as f64)).ln()
        })
        .sum();
    let denom = match norm {
        NmiNormalization::Arithmetic => (hu + hv) / 2.0,
        NmiNormalization::Geometric => (hu * hv).sqrt(),
        NmiNormalization::Max => hu.max(hv),
        NmiNormalization::Min => hu.min(hv),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmiRow {
    pub run_a: String,
    pub run_b: String,
    pub nmi: f64,
}

pub fn write_nmi_csv(path: &Path, rows: &[NmiRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["run_a", "run_b", "nmi"])?;
    for r in rows {
        w.write_record([r.run_a.clone(), r.run_b.clone(), format!("{:.6}", r.nmi)])?;
    }
    w.flush()?;
    Ok(())
}

/// `|A∩B| / |A∪B|`; 1 for two empty sets.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let a: BTreeSet<&String> = a.iter().collect();
    let b: BTreeSet<&String> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// For each truth group, the best Jaccard against any found group.
pub fn best_match_jaccard(truth: &[Vec<String>], found: &[Vec<String>]) -> Vec<f64> {
    truth
        .iter()
        .map(|t| found.iter().map(|f| jaccard(t, f)).fold(0.0, f64::max))
        .collect()
}

/// Groups of a labeling, keyed by label.
pub fn groups(labels: &Labeling) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, l) in labels {
        out.entry(l.clone()).or_default().push(id.clone());
    }
    for v in out.values_mut() {
        v.sort();
    }
    out
}

/// Block-structured synthetic correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    /// `(size, within-block mean)` per block.
    pub blocks: Vec<(usize, f64)>,
    pub cross_mean: f64,
    pub noise_sd: f64,
    pub n_background: usize,
    pub seed: u64,
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        for &(size, mean) in &self.blocks {
            if size < 2 {
                return Err(Error::config("blocks", format!("block size {size} below 2")));
            }
            if !(0.0..1.0).contains(&mean) {
                return Err(Error::config("blocks", format!("within mean {mean} outside [0,1)")));
            }
        }
        if !(self.cross_mean.abs() < 1.0) {
            return Err(Error::config("cross_mean", "must lie in (-1,1)"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::config("noise_sd", "must be non-negative"));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.blocks.iter().map(|b| b.0).sum::<usize>() + self.n_background
    }
}

pub const PLANTED_CLIP: f64 = 0.999;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedGraph {
    /// Unthresholded (τ = 0) graph over ids `n0, n1, …`, blocks first.
    pub graph: SimilarityGraph,
    /// `b1, b2, …` for block members, `misc` for background nodes.
    pub labels: Labeling,
}

impl PlantedGraph {
    /// Block member lists in block order.
    pub fn blocks(&self) -> Vec<Vec<String>> {
        let mut g = groups(&self.labels);
        g.remove(MISC_LABEL);
        let mut out: Vec<(String, Vec<String>)> = g.into_iter().collect();
        out.sort_by(|a, b| label_order(&a.0, &b.0));
        out.into_iter().map(|(_, v)| v).collect()
    }
}

/// Means per block pair plus seeded Gaussian noise on the upper triangle,
/// clipped to `±0.999`, zero diagonal.
pub fn generate_planted(spec: &PlantedSpec) -> Result<PlantedGraph> {
    spec.validate()?;
    let n = spec.size();
    let mut block_of: Vec<Option<usize>> = Vec::with_capacity(n);
    for (b, &(size, _)) in spec.blocks.iter().enumerate() {
        block_of.extend(std::iter::repeat_n(Some(b), size));
    }
    block_of.extend(std::iter::repeat_n(None, spec.n_background));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::config("noise_sd", e.to_string()))?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let mean = match (block_of[i], block_of[j]) {
                (Some(a), Some(b)) if a == b => spec.blocks[a].1,
                _ => spec.cross_mean,
            };
            let e = if spec.noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let w = (mean + e).clamp(-PLANTED_CLIP, PLANTED_CLIP);
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
    }
    let ids: Vec<String> = (0..n).map(|i| format!("n{i}")).collect();
    let labels = ids
        .iter()
        .zip(&block_of)
        .map(|(id, b)| {
            let l = b.map_or_else(|| MISC_LABEL.to_string(), |b| format!("b{}", b + 1));
            (id.clone(), l)
        })
        .collect();
    Ok(PlantedGraph {
        graph: SimilarityGraph::from_dense(ids, &m, 0.0)?,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labeling(pairs: &[(&str, &str)]) -> Labeling {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn graph(n: usize, f: impl Fn(usize, usize) -> f64) -> SimilarityGraph {
        let d = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { f(i.min(j), i.max(j)) });
        SimilarityGraph::from_dense((0..n).map(|i| format!("d{i}")).collect(), &d, 0.0).unwrap()
    }

    fn gcm_from(values: Vec<Vec<f64>>) -> GroupCorrelationMatrix {
        let g = values.len();
        GroupCorrelationMatrix {
            labels: (1..=g).map(|i| format!("C{i}")).collect(),
            sizes: vec![2; g],
            values: values.into_iter().map(|r| r.into_iter().map(Some).collect()).collect(),
        }
    }

    #[test]
    fn label_ordering() {
        let mut v = vec!["misc", "C10", "C2", "C1", "b3"];
        v.sort_by(|a, b| label_order(a, b));
        assert_eq!(v, ["C1", "C2", "C10", "b3", "misc"]);
    }

    #[test]
    fn gcm_single_group_of_three() {
        let w = [[0.0, 0.2, 0.4], [0.2, 0.0, 0.6], [0.4, 0.6, 0.0]];
        let g = graph(3, |i, j| w[i][j]);
        let gcm = group_correlation(&g, &labeling(&[("d0", "x"), ("d1", "x"), ("d2", "x")])).unwrap();
        assert_eq!(gcm.len(), 1);
        assert!((gcm.get(0, 0).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn gcm_constant_cross() {
        let g = graph(4, |i, j| if (i < 2) == (j < 2) { 0.7 } else { 0.1 });
        let gcm = group_correlation(&g, &labeling(&[("d0", "a"), ("d1", "a"), ("d2", "b"), ("d3", "b")])).unwrap();
        assert_eq!(gcm.get(0, 1), Some(0.1));
        assert_eq!(gcm.get(1, 0), Some(0.1));
    }

    #[test]
    fn gcm_singletons() {
        let g = graph(3, |i, j| (i + j) as f64 / 10.0);
        let gcm = group_correlation(&g, &labeling(&[("d0", "C1"), ("d1", "C2"), ("d2", "C3")])).unwrap();
        for k in 0..3 {
            assert_eq!(gcm.get(k, k), None);
            for l in 0..3 {
                if k != l {
                    assert!((gcm.get(k, l).unwrap() - g.weight(k, l)).abs() < 1e-15);
                }
            }
        }
        assert!(matches!(
            group_correlation(&g, &labeling(&[("d0", "C1"), ("d1", "C2")])),
            Err(Error::IdMismatch(ids)) if ids == ["d2"]
        ));
    }

    #[test]
    fn heterophily_examples() {
        let dominant = gcm_from(vec![vec![0.5, 0.1], vec![0.1, 0.5]]);
        assert!(heterophily_fraction(&dominant).unwrap().iter().all(|h| h.fraction == 0.0));
        let constant = gcm_from(vec![vec![0.3; 3]; 3]);
        assert!(heterophily_fraction(&constant).unwrap().iter().all(|h| h.fraction == 1.0));
        let m = gcm_from(vec![
            vec![0.5, 0.6, 0.2],
            vec![0.6, 0.7, 0.1],
            vec![0.2, 0.1, 0.4],
        ]);
        assert_eq!(heterophily_fraction(&m).unwrap()[0].fraction, 0.5);
        assert!(matches!(heterophily_fraction(&gcm_from(vec![vec![0.5]])), Err(Error::TooSmall { .. })));
    }

    #[test]
    fn heterophily_skips_undefined_diagonal() {
        let mut m = gcm_from(vec![vec![0.5, 0.1], vec![0.1, 0.5]]);
        m.values[1][1] = None;
        let h = heterophily_fraction(&m).unwrap();
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].label, "C1");
    }

    #[test]
    fn nmi_examples() {
        let u = labeling(&[("a", "1"), ("b", "1"), ("c", "2"), ("d", "2")]);
        let renamed = labeling(&[("a", "x"), ("b", "x"), ("c", "y"), ("d", "y")]);
        let indep = labeling(&[("a", "1"), ("c", "1"), ("b", "2"), ("d", "2")]);
        assert!((nmi(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!((nmi(&u, &renamed).unwrap() - 1.0).abs() < 1e-12);
        assert!(nmi(&u, &indep).unwrap().abs() < 1e-12);

        let one = labeling(&[("a", "k"), ("b", "k"), ("c", "k"), ("d", "k")]);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        assert_eq!(nmi(&one, &u).unwrap(), 0.0);

        let short = labeling(&[("a", "1"), ("b", "1"), ("c", "2"), ("e", "2")]);
        assert!(matches!(nmi(&u, &short), Err(Error::IdMismatch(d)) if d == ["d", "e"]));
    }

    #[test]
    fn nmi_hand_value() {
        // u = {1,1,2,2}, v = {1,1,1,2}: I = ln2·… computed by hand below
        let u = labeling(&[("a", "1"), ("b", "1"), ("c", "2"), ("d", "2")]);
        let v = labeling(&[("a", "1"), ("b", "1"), ("c", "1"), ("d", "2")]);
        let hu = 2f64.ln();
        let hv = -(0.75 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        let i = 0.5 * (0.5f64 / (0.5 * 0.75)).ln() + 0.25 * (0.25f64 / (0.5 * 0.75)).ln() + 0.25 * (0.25f64 / (0.5 * 0.25)).ln();
        let want = 2.0 * i / (hu + hv);
        assert!((nmi(&u, &v).unwrap() - want).abs() < 1e-12);
        assert!((nmi_with(&u, &v, NmiNormalization::Max).unwrap() - i / hu).abs() < 1e-12);
        assert!((nmi_with(&u, &v, NmiNormalization::Min).unwrap() - i / hv).abs() < 1e-12);
    }

    #[test]
    fn planted_without_noise_is_two_level() {
        let spec = PlantedSpec { blocks: vec![(5, 0.6)], cross_mean: 0.0, noise_sd: 0.0, n_background: 3, seed: 1 };
        let p = generate_planted(&spec).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let want = if i != j && i < 5 && j < 5 { 0.6 } else { 0.0 };
                assert_eq!(p.graph.weight(i, j), want);
            }
        }
        assert_eq!(p.labels["n0"], "b1");
        assert_eq!(p.labels["n7"], "misc");
        assert_eq!(p.blocks().len(), 1);
    }

    #[test]
    fn planted_is_deterministic() {
        let spec = PlantedSpec { blocks: vec![(10, 0.5), (8, 0.4)], cross_mean: 0.05, noise_sd: 0.1, n_background: 4, seed: 3 };
        let a = generate_planted(&spec).unwrap();
        let b = generate_planted(&spec).unwrap();
        assert_eq!(a.graph, b.graph);
        let c = generate_planted(&PlantedSpec { seed: 4, ..spec }).unwrap();
        assert_ne!(a.graph, c.graph);
    }

    #[test]
    fn planted_rejects_bad_spec() {
        let bad = PlantedSpec { blocks: vec![(1, 0.5)], cross_mean: 0.0, noise_sd: 0.0, n_background: 0, seed: 0 };
        assert!(matches!(generate_planted(&bad), Err(Error::Config { .. })));
    }

    #[test]
    fn assortative_gcm_has_zero_heterophily() {
        let spec = PlantedSpec { blocks: vec![(6, 0.5); 4], cross_mean: 0.05, noise_sd: 0.0, n_background: 0, seed: 0 };
        let p = generate_planted(&spec).unwrap();
        let gcm = group_correlation(&p.graph, &p.labels).unwrap();
        for k in 0..4 {
            assert!((gcm.get(k, k).unwrap() - 0.5).abs() < 1e-12);
        }
        assert!(heterophily_fraction(&gcm).unwrap().iter().all(|h| h.fraction == 0.0));
    }

    #[test]
    fn median_cases() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    fn arb_labeling(n: usize) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
        (proptest::collection::vec(0u8..4, n), proptest::collection::vec(0u8..4, n))
    }

    proptest! {
        #[test]
        fn nmi_symmetric_bounded_and_relabel_invariant((a, b) in arb_labeling(12), shift in 1u8..4) {
            let u: Labeling = a.iter().enumerate().map(|(i, l)| (format!("d{i}"), l.to_string())).collect();
            let v: Labeling = b.iter().enumerate().map(|(i, l)| (format!("d{i}"), l.to_string())).collect();
            let x = nmi(&u, &v).unwrap();
            let y = nmi(&v, &u).unwrap();
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&x));
            let renamed: Labeling = u.iter().map(|(k, l)| (k.clone(), format!("r{}", (l.parse::<u8>().unwrap() + shift) % 4))).collect();
            prop_assert!((nmi(&u, &renamed).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gcm_permutation_invariant(vals in proptest::collection::vec(-0.9f64..0.9, 36), assign in proptest::collection::vec(0u8..3, 9)) {
            let g = graph(9, |i, j| vals[i * 4 + j % 4]);
            let lab: Labeling = assign.iter().enumerate().map(|(i, a)| (format!("d{i}"), format!("C{}", a + 1))).collect();
            let perm = ["C3", "C1", "C2"];
            let relab: Labeling = lab.iter().map(|(k, l)| {
                let idx: usize = l[1..].parse().unwrap();
                (k.clone(), perm[idx - 1].to_string())
            }).collect();
            let a = group_correlation(&g, &lab).unwrap();
            let b = group_correlation(&g, &relab).unwrap();
            for (k, lk) in a.labels.iter().enumerate() {
                for (l, ll) in a.labels.iter().enumerate() {
                    let pk = b.position(perm[lk[1..].parse::<usize>().unwrap() - 1]).unwrap();
                    let pl = b.position(perm[ll[1..].parse::<usize>().unwrap() - 1]).unwrap();
                    let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
                        (Some(x), Some(y)) => (x - y).abs() < 1e-12,
                        (x, y) => x == y,
                    };
                    prop_assert!(close(a.get(k, l), b.get(pk, pl)));
                    prop_assert_eq!(a.get(k, l), a.get(l, k));
                }
            }
        }
    }
}
