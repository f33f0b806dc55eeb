//! Receiver decisions from a recovered `X̂` and their scoring.
//!
//! Rows are detected by the energy of their pilot-block entries, channels are
//! read off the pilot columns by least squares, and each data slot is
//! maximum-ratio combined across antennas and hard-decided.

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, frobenius_sq, CMatrix};
use crate::system_model::{Qam, SystemConfig, TransmissionRealization};

/// NMSE values are clipped to this floor (an exact estimate has NMSE −∞).
pub const NMSE_FLOOR_DB: f64 = -120.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `τ = tau·√(σ²·R·L_p)`.
    NoiseScaled,
    /// `τ = tau`.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub row_threshold_mode: ThresholdMode,
    pub tau: f64,
    /// Lower bound on the noise-scaled thresholds, so that numerically tiny
    /// rows are not detected when σ² = 0.
    pub tau_floor: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            row_threshold_mode: ThresholdMode::NoiseScaled,
            tau: 4.0,
            tau_floor: 1e-6,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", "must be positive and finite"));
        }
        if !(self.tau_floor >= 0.0 && self.tau_floor.is_finite()) {
            return Err(Error::config("tau_floor", "must be non-negative and finite"));
        }
        Ok(())
    }

    /// Threshold on the norm of a row's `R·L_p` pilot entries.
    pub fn row_threshold(&self, noise_var: f64, n_antennas: usize, n_pilot: usize) -> f64 {
        match self.row_threshold_mode {
            ThresholdMode::Absolute => self.tau,
            ThresholdMode::NoiseScaled => {
                (self.tau * (noise_var * (n_antennas * n_pilot) as f64).sqrt()).max(self.tau_floor)
            }
        }
    }

    /// Threshold on the norm of a row's `R` entries in one data slot.
    pub fn slot_threshold(&self, noise_var: f64, n_antennas: usize, n_pilot: usize) -> f64 {
        match self.row_threshold_mode {
            ThresholdMode::Absolute => self.tau / (n_pilot as f64).sqrt(),
            ThresholdMode::NoiseScaled => (self.tau * (noise_var * n_antennas as f64).sqrt()).max(self.tau_floor),
        }
    }
}

/// Hard decisions for one detected row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RowDecision {
    /// Constellation index per data slot; `None` marks a slot decided empty.
    Symbols(Vec<Option<usize>>),
    /// The channel estimate had zero norm.
    Undecodable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverOutput {
    /// Detected `(m, t)` rows.
    pub detected_rows: BTreeSet<(usize, usize)>,
    /// Sequence indices of the detected rows.
    pub detected_pilots: BTreeSet<usize>,
    pub channel_estimates: BTreeMap<(usize, usize), Vec<Complex64>>,
    pub data_decisions: BTreeMap<(usize, usize), RowDecision>,
    /// Pilot block `Û` of the recovered matrix.
    pub pilot_estimate: CMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    /// `|ℳ∩ℳ̂| / |ℳ|`.
    pub precision_mu_p: f64,
    /// `|ℳ∩ℳ̂| / |ℳ̂|`.
    pub recall_mu_r: f64,
    /// `None` when the true pilot block is zero (no active users).
    pub nmse_db: Option<f64>,
    pub mu_data: f64,
    /// `mu_data` was set to 1 because there were no active users.
    pub mu_data_by_convention: bool,
    pub n_active: usize,
    pub recovered_users: usize,
    /// Rows shared by two or more users.
    pub collisions: usize,
    /// Sequences in ℳ missing from ℳ̂.
    pub misdetections: usize,
    /// Sequences in ℳ̂ missing from ℳ.
    pub false_alarms: usize,
    /// Row-level (`(m, t)`) counterparts.
    pub row_misdetections: usize,
    pub row_false_alarms: usize,
}

fn pilot_columns(cfg: &SystemConfig) -> usize {
    cfg.n_antennas * cfg.n_pilot
}

fn check_shape(x_hat: &CMatrix, cfg: &SystemConfig) -> Result<()> {
    if x_hat.shape() != (cfg.n_dict_columns(), cfg.n_columns()) {
        return Err(Error::dims(
            "recovered matrix",
            cfg.n_dict_columns() * cfg.n_columns(),
            x_hat.nrows() * x_hat.ncols(),
        ));
    }
    if !all_finite(x_hat) {
        return Err(Error::NonFinite {
            context: "recovered matrix",
            stage: 0,
            iteration: 0,
        });
    }
    Ok(())
}

/// Rows whose pilot-block norm exceeds the detection threshold, and the
/// sequence indices they map to.
pub fn detect_rows(
    x_hat: &CMatrix,
    cfg: &SystemConfig,
    det: &DetectionConfig,
    noise_var: f64,
) -> Result<(BTreeSet<(usize, usize)>, BTreeSet<usize>)> {
    check_shape(x_hat, cfg)?;
    det.validate()?;
    let tau = det.row_threshold(noise_var, cfg.n_antennas, cfg.n_pilot);
    let pc = pilot_columns(cfg);
    let mut rows = BTreeSet::new();
    for j in 0..x_hat.nrows() {
        let e: f64 = (0..pc).map(|c| x_hat[(j, c)].norm_sqr()).sum();
        if e.sqrt() > tau {
            rows.insert(cfg.row_to_pair(j));
        }
    }
    let pilots = rows.iter().map(|&(m, _)| m).collect();
    Ok((rows, pilots))
}

/// Per-antenna least-squares fit of each detected row's pilot entries to the
/// known pilot vector. A row shared by colliding users yields the sum of
/// their channels.
pub fn estimate_channels(
    x_hat: &CMatrix,
    cfg: &SystemConfig,
    detected_rows: &BTreeSet<(usize, usize)>,
    pilot_symbols: &[Complex64],
) -> Result<BTreeMap<(usize, usize), Vec<Complex64>>> {
    check_shape(x_hat, cfg)?;
    if pilot_symbols.len() != cfg.n_pilot {
        return Err(Error::dims("pilot symbols", cfg.n_pilot, pilot_symbols.len()));
    }
    let energy: f64 = pilot_symbols.iter().map(|p| p.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::config("pilot_symbols", "must not all be zero"));
    }
    let mut out = BTreeMap::new();
    for &(m, t) in detected_rows {
        let j = cfg.row_index(m, t);
        let h = (0..cfg.n_antennas)
            .map(|r| {
                pilot_symbols
                    .iter()
                    .enumerate()
                    .map(|(slot, p)| p.conj() * x_hat[(j, cfg.column_index(slot, r))])
                    .sum::<Complex64>()
                    / energy
            })
            .collect();
        out.insert((m, t), h);
    }
    Ok(out)
}

/// Maximum-ratio combining and hard decisions for every data slot of each
/// row with a channel estimate.
///
/// A slot is decided empty when the combined value is closer to the origin
/// than half the minimum constellation distance and the raw slot energy is
/// below the slot threshold.
pub fn recover_data(
    x_hat: &CMatrix,
    cfg: &SystemConfig,
    channel_estimates: &BTreeMap<(usize, usize), Vec<Complex64>>,
    det: &DetectionConfig,
    noise_var: f64,
) -> Result<BTreeMap<(usize, usize), RowDecision>> {
    check_shape(x_hat, cfg)?;
    det.validate()?;
    let qam = Qam::new(cfg.modulation_order);
    let half_dmin = 0.5 * qam.min_distance();
    let tau_slot = det.slot_threshold(noise_var, cfg.n_antennas, cfg.n_pilot);
    let mut out = BTreeMap::new();
    for (&(m, t), h) in channel_estimates {
        if h.len() != cfg.n_antennas {
            return Err(Error::dims("channel estimate", cfg.n_antennas, h.len()));
        }
        let hn: f64 = h.iter().map(|z| z.norm_sqr()).sum();
        if hn == 0.0 {
            out.insert((m, t), RowDecision::Undecodable);
            continue;
        }
        let j = cfg.row_index(m, t);
        let symbols = (0..cfg.max_data)
            .map(|l| {
                let slot = cfg.n_pilot + l;
                let (mut z, mut raw) = (Complex64::new(0.0, 0.0), 0.0);
                for (r, hr) in h.iter().enumerate() {
                    let v = x_hat[(j, cfg.column_index(slot, r))];
                    z += hr.conj() * v;
                    raw += v.norm_sqr();
                }
                z /= hn;
                if z.norm() < half_dmin && raw.sqrt() < tau_slot {
                    None
                } else {
                    Some(qam.decide(z))
                }
            })
            .collect();
        out.insert((m, t), RowDecision::Symbols(symbols));
    }
    Ok(out)
}

/// Runs row detection, channel estimation and data recovery.
pub fn receive(x_hat: &CMatrix, cfg: &SystemConfig, det: &DetectionConfig, noise_var: f64) -> Result<ReceiverOutput> {
    let (detected_rows, detected_pilots) = detect_rows(x_hat, cfg, det, noise_var)?;
    let pilots = vec![crate::system_model::PILOT_SYMBOL; cfg.n_pilot];
    let channel_estimates = estimate_channels(x_hat, cfg, &detected_rows, &pilots)?;
    let data_decisions = recover_data(x_hat, cfg, &channel_estimates, det, noise_var)?;
    Ok(ReceiverOutput {
        detected_rows,
        detected_pilots,
        channel_estimates,
        data_decisions,
        pilot_estimate: x_hat.columns(0, pilot_columns(cfg)).into_owned(),
    })
}

/// `(μ_p, μ_r, F1)` for true set ℳ and detected set ℳ̂.
///
/// Both sets empty counts as a perfect score; exactly one empty scores 0.
pub fn detection_scores(truth: &BTreeSet<usize>, detected: &BTreeSet<usize>) -> (f64, f64, f64) {
    match (truth.is_empty(), detected.is_empty()) {
        (true, true) => return (1.0, 1.0, 1.0),
        (true, false) | (false, true) => return (0.0, 0.0, 0.0),
        _ => {}
    }
    let hit = truth.intersection(detected).count() as f64;
    let mu_p = hit / truth.len() as f64;
    let mu_r = hit / detected.len() as f64;
    let f1 = if mu_p + mu_r > 0.0 { 2.0 * mu_p * mu_r / (mu_p + mu_r) } else { 0.0 };
    (mu_p, mu_r, f1)
}

/// NMSE in dB of `estimate` against `truth`, floored at [`NMSE_FLOOR_DB`].
pub fn nmse_db(estimate: &CMatrix, truth: &CMatrix) -> Option<f64> {
    let t = frobenius_sq(truth);
    if t == 0.0 {
        return None;
    }
    let e = frobenius_sq(&(estimate - truth));
    Some((10.0 * (e / t).log10()).max(NMSE_FLOOR_DB))
}

pub fn evaluate(real: &TransmissionRealization, out: &ReceiverOutput) -> Result<MetricsReport> {
    let truth_u = real.pilot_block();
    if out.pilot_estimate.shape() != truth_u.shape() {
        return Err(Error::dims(
            "pilot block estimate",
            truth_u.nrows() * truth_u.ncols(),
            out.pilot_estimate.nrows() * out.pilot_estimate.ncols(),
        ));
    }
    let (_, truth_seqs) = real.ground_truth_support();
    let (mu_p, mu_r, f1) = detection_scores(&truth_seqs, &out.detected_pilots);
    let truth_rows: BTreeSet<(usize, usize)> = real.users().iter().map(|u| (u.sequence, u.delay)).collect();

    let recovered_users = real
        .users()
        .iter()
        .filter(|u| match out.data_decisions.get(&(u.sequence, u.delay)) {
            Some(RowDecision::Symbols(s)) => s
                .iter()
                .enumerate()
                .all(|(l, d)| *d == u.data_indices.get(l).copied()),
            _ => false,
        })
        .count();
    let n_active = real.users().len();
    let (mu_data, by_convention) = if n_active == 0 {
        (1.0, true)
    } else {
        (recovered_users as f64 / n_active as f64, false)
    };
    Ok(MetricsReport {
        f1,
        precision_mu_p: mu_p,
        recall_mu_r: mu_r,
        nmse_db: nmse_db(&out.pilot_estimate, &truth_u),
        mu_data,
        mu_data_by_convention: by_convention,
        n_active,
        recovered_users,
        collisions: real.collision_rows().len(),
        misdetections: truth_seqs.difference(&out.detected_pilots).count(),
        false_alarms: out.detected_pilots.difference(&truth_seqs).count(),
        row_misdetections: truth_rows.difference(&out.detected_rows).count(),
        row_false_alarms: out.detected_rows.difference(&truth_rows).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::{amp_bp, AmpConfig};
    use crate::rng::{complex_normal, rng_from_seed};
    use crate::system_model::{
        draw_realization, synthesize_observation, ActiveUser, ExpandedDictionary, SpreadingPool, PILOT_SYMBOL,
    };
    use proptest::prelude::*;
    use rand::Rng;

    fn small_cfg() -> SystemConfig {
        SystemConfig {
            n_users: 50,
            n_sequences: 8,
            seq_len: 16,
            guard: 2,
            max_delay: 2,
            n_pilot: 1,
            max_data: 3,
            n_antennas: 2,
            n_active: 3,
            snr_db: f64::INFINITY,
            ..Default::default()
        }
    }

    fn user(id: usize, seq: usize, delay: usize, h: &[Complex64], data: &[usize]) -> ActiveUser {
        ActiveUser {
            id,
            sequence: seq,
            delay,
            channel: h.to_vec(),
            data_len: data.len(),
            data_indices: data.to_vec(),
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn three_users(cfg: &SystemConfig) -> TransmissionRealization {
        TransmissionRealization::from_users(
            cfg,
            vec![
                user(1, 0, 0, &[c(1.0, 0.5), c(-0.3, 0.2)], &[1, 4, 7]),
                user(2, 3, 2, &[c(0.2, -0.9), c(0.7, 0.7)], &[2]),
                user(3, 5, 1, &[c(-1.2, 0.1), c(0.4, -0.4)], &[3, 9]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_estimate_detects_nothing() {
        let cfg = small_cfg();
        let x = CMatrix::zeros(cfg.n_dict_columns(), cfg.n_columns());
        let (rows, pilots) = detect_rows(&x, &cfg, &DetectionConfig::default(), 0.1).unwrap();
        assert!(rows.is_empty() && pilots.is_empty());
    }

    #[test]
    fn exact_estimate_gives_perfect_receiver() {
        let cfg = small_cfg();
        let real = three_users(&cfg);
        let out = receive(real.x_true(), &cfg, &DetectionConfig::default(), 0.0).unwrap();
        let truth: BTreeSet<_> = real.users().iter().map(|u| (u.sequence, u.delay)).collect();
        assert_eq!(out.detected_rows, truth);
        for u in real.users() {
            let h = &out.channel_estimates[&(u.sequence, u.delay)];
            for (a, b) in h.iter().zip(&u.channel) {
                assert!((a - b).norm() < 1e-14);
            }
        }
        assert_eq!(
            out.data_decisions[&(3, 2)],
            RowDecision::Symbols(vec![Some(2), None, None])
        );
        let m = evaluate(&real, &out).unwrap();
        assert_eq!((m.f1, m.mu_data), (1.0, 1.0));
        assert_eq!(m.nmse_db, Some(NMSE_FLOOR_DB));
        assert_eq!(m.false_alarms + m.misdetections, 0);
    }

    #[test]
    fn repeated_pilot_channel_estimate() {
        let cfg = SystemConfig { n_pilot: 2, ..small_cfg() };
        let real = three_users(&cfg);
        let ch = estimate_channels(real.x_true(), &cfg, &[(5, 1)].into(), real.pilot_symbols()).unwrap();
        assert!((ch[&(5, 1)][0] - c(-1.2, 0.1)).norm() < 1e-14);
    }

    #[test]
    fn collision_estimates_the_channel_sum_and_loses_data() {
        let cfg = small_cfg();
        let h1 = [c(1.0, 0.0), c(0.0, 1.0)];
        let h2 = [c(0.5, -0.5), c(-0.2, 0.3)];
        let real = TransmissionRealization::from_users(
            &cfg,
            vec![user(4, 2, 1, &h1, &[4, 5]), user(9, 2, 1, &h2, &[9, 11, 0])],
        )
        .unwrap();
        let out = receive(real.x_true(), &cfg, &DetectionConfig::default(), 0.0).unwrap();
        let h = &out.channel_estimates[&(2, 1)];
        for r in 0..2 {
            assert!((h[r] - (h1[r] + h2[r])).norm() < 1e-14);
        }
        let m = evaluate(&real, &out).unwrap();
        assert_eq!(m.collisions, 1);
        assert!(m.recovered_users < 2);
    }

    #[test]
    fn set_arithmetic_examples() {
        let truth: BTreeSet<usize> = [1, 2, 3, 4].into();
        let det: BTreeSet<usize> = [3, 4, 5, 6].into();
        assert_eq!(detection_scores(&truth, &det), (0.5, 0.5, 0.5));
        assert_eq!(detection_scores(&truth, &BTreeSet::new()), (0.0, 0.0, 0.0));
        assert_eq!(detection_scores(&BTreeSet::new(), &BTreeSet::new()), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_active_users_sets_data_metric_by_convention() {
        let cfg = SystemConfig { n_active: 0, ..small_cfg() };
        let real = draw_realization(&cfg, 1).unwrap();
        let out = receive(real.x_true(), &cfg, &DetectionConfig::default(), 0.0).unwrap();
        let m = evaluate(&real, &out).unwrap();
        assert!(m.mu_data_by_convention);
        assert_eq!((m.mu_data, m.nmse_db, m.f1), (1.0, None, 1.0));
    }

    /// Symbol error probability of square M-QAM on an AWGN channel.
    fn qam_ser(order: usize, es_over_n0: f64) -> f64 {
        let q = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
        let m = order as f64;
        let p = 2.0 * (1.0 - 1.0 / m.sqrt()) * q((3.0 * es_over_n0 / (m - 1.0)).sqrt());
        1.0 - (1.0 - p) * (1.0 - p)
    }

    /// Complementary error function (W. J. Cody's rational approximation,
    /// relative error below 1.2e-7).
    fn erfc(x: f64) -> f64 {
        let z = x.abs();
        let t = 1.0 / (1.0 + 0.5 * z);
        let r = t * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807
                                + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
        if x >= 0.0 {
            r
        } else {
            2.0 - r
        }
    }

    #[test]
    fn sixteen_qam_symbol_errors_at_30_db() {
        let oracle = qam_ser(16, 1000.0);
        assert!(oracle <= 1e-3);
        // Looser operating point where errors are frequent enough to compare.
        let oracle_12db = qam_ser(16, 10f64.powf(1.2));

        let cfg = SystemConfig { n_antennas: 1, max_data: 1, n_pilot: 1, ..small_cfg() };
        let qam = Qam::new(16);
        let mut rng = rng_from_seed(99);
        let trials = 20_000;
        for (snr, bound) in [(1000.0, 1e-3), (10f64.powf(1.2), 1.3 * oracle_12db)] {
            let mut errors = 0;
            for _ in 0..trials {
                let idx = rng.random_range(0..16);
                let h = complex_normal(&mut rng, 1.0);
                let mut x = CMatrix::zeros(cfg.n_dict_columns(), cfg.n_columns());
                x[(0, 0)] = h * PILOT_SYMBOL;
                x[(0, 1)] = h * qam.point(idx) + complex_normal(&mut rng, h.norm_sqr() / snr);
                let ch = BTreeMap::from([((0, 0), vec![h])]);
                let d = recover_data(&x, &cfg, &ch, &DetectionConfig::default(), 0.0).unwrap();
                if d[&(0, 0)] != RowDecision::Symbols(vec![Some(idx)]) {
                    errors += 1;
                }
            }
            let ser = errors as f64 / trials as f64;
            assert!(ser <= bound, "SER {ser} above {bound}");
        }
    }

    #[test]
    fn raising_the_threshold_trades_detections() {
        let cfg = SystemConfig {
            n_users: 200,
            n_sequences: 20,
            seq_len: 16,
            guard: 2,
            max_delay: 2,
            n_antennas: 1,
            n_active: 6,
            snr_db: 10.0,
            ..Default::default()
        };
        let pool = SpreadingPool::generate(&cfg, 5).unwrap();
        let dict = ExpandedDictionary::expand(&pool, cfg.guard);
        let taus = [0.5, 1.0, 2.0, 3.0, 4.0];
        let mut mu_p = vec![0.0; taus.len()];
        let mut mu_r = vec![0.0; taus.len()];
        for trial in 0..100 {
            let real = draw_realization(&cfg, 10 + trial).unwrap();
            let obs = synthesize_observation(&real, &dict, cfg.snr_db, 500 + trial).unwrap();
            let x = amp_bp(&obs.y, &dict, &AmpConfig::default(), cfg.n_antennas, cfg.n_slots())
                .unwrap()
                .x_hat;
            let (_, truth) = real.ground_truth_support();
            let mut prev: Option<BTreeSet<usize>> = None;
            for (k, &tau) in taus.iter().enumerate() {
                let det = DetectionConfig { tau, ..Default::default() };
                let (_, pilots) = detect_rows(&x, &cfg, &det, obs.noise_var).unwrap();
                if let Some(prev) = &prev {
                    assert!(pilots.is_subset(prev), "trial {trial}, tau {tau}");
                }
                let (p, r, _) = detection_scores(&truth, &pilots);
                mu_p[k] += p;
                mu_r[k] += r;
                prev = Some(pilots);
            }
        }
        for k in 1..taus.len() {
            assert!(mu_p[k] <= mu_p[k - 1], "{mu_p:?}");
        }
        assert!(mu_p[0] > mu_p[taus.len() - 1] && mu_r[0] < mu_r[taus.len() - 1]);
    }

    proptest! {
        #[test]
        fn f1_is_symmetric_and_bounded(
            a in proptest::collection::btree_set(0usize..12, 0..8),
            b in proptest::collection::btree_set(0usize..12, 0..8),
        ) {
            let (p, r, f) = detection_scores(&a, &b);
            let (p2, r2, f2) = detection_scores(&b, &a);
            prop_assert_eq!(f, f2);
            prop_assert_eq!((p, r), (r2, p2));
            for v in [p, r, f] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn nmse_is_scale_invariant(seed in 0u64..500, re in -3.0f64..3.0, im in -3.0f64..3.0) {
            prop_assume!(re.abs() + im.abs() > 1e-3);
            let mut rng = rng_from_seed(seed);
            let u = CMatrix::from_fn(6, 2, |_, _| complex_normal(&mut rng, 1.0));
            let e = CMatrix::from_fn(6, 2, |_, _| complex_normal(&mut rng, 1.0));
            let s = c(re, im);
            let a = nmse_db(&e, &u).unwrap();
            let b = nmse_db(&(e * s), &(u * s)).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn metrics_stay_in_bounds(seed in 0u64..200, tau in 0.1f64..10.0) {
            let cfg = SystemConfig { snr_db: 5.0, ..small_cfg() };
            let real = draw_realization(&cfg, seed).unwrap();
            let mut rng = rng_from_seed(seed + 1);
            let noisy = real.x_true().map(|z| z + complex_normal(&mut rng, 0.3));
            let det = DetectionConfig { tau, ..Default::default() };
            let m = evaluate(&real, &receive(&noisy, &cfg, &det, 0.3).unwrap()).unwrap();
            for v in [m.f1, m.precision_mu_p, m.recall_mu_r, m.mu_data] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
