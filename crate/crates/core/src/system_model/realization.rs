use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use sha2::{Digest, Sha256};

use super::{Qam, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::rng::{complex_normal, rng_from_seed};

/// Pilot symbol shared by every user.
pub const PILOT_SYMBOL: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// One active device in a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveUser {
    pub id: usize,
    /// Selected spreading sequence (0-based).
    pub sequence: usize,
    /// Symbol delay in `0..=T_max`.
    pub delay: usize,
    /// Per-antenna channel `l_k·g_{k,r}`.
    pub channel: Vec<Complex64>,
    /// Number of transmitted data symbols `L_d^k` in `1..=L_d`.
    pub data_len: usize,
    /// Constellation indices of the transmitted data symbols (`data_len` long).
    pub data_indices: Vec<usize>,
}

impl ActiveUser {
    /// Data symbols padded with zeros up to `max_data`.
    pub fn data_symbols(&self, qam: &Qam, max_data: usize) -> Vec<Complex64> {
        let mut d = vec![Complex64::new(0.0, 0.0); max_data];
        for (slot, &idx) in self.data_indices.iter().enumerate() {
            d[slot] = qam.point(idx);
        }
        d
    }
}

/// One Monte-Carlo draw of the uplink with its complete ground truth.
#[derive(Debug, Clone)]
pub struct TransmissionRealization {
    cfg: SystemConfig,
    users: Vec<ActiveUser>,
    pilot_symbols: Vec<Complex64>,
    x_true: CMatrix,
    seed: Option<u64>,
}

/// Draws active users, their sequence choices, delays, channels and data, and
/// assembles the row-sparse `X = [U, Z]` in symbol-major column order.
///
/// The first data symbol of every user carries `id mod modulation_order`, so
/// exact data recovery implies user identification.
pub fn draw_realization(cfg: &SystemConfig, seed: u64) -> Result<TransmissionRealization> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let qam = Qam::new(cfg.modulation_order);
    let mut ids = sample(&mut rng, cfg.n_users, cfg.n_active).into_vec();
    ids.sort_unstable();
    let users = ids
        .into_iter()
        .map(|id| {
            let sequence = rng.random_range(0..cfg.n_sequences);
            let delay = rng.random_range(0..=cfg.max_delay);
            let l = cfg.path_loss(id);
            let channel = (0..cfg.n_antennas).map(|_| complex_normal(&mut rng, 1.0) * l).collect();
            let data_len = rng.random_range(1..=cfg.max_data);
            let data_indices = (0..data_len)
                .map(|slot| {
                    if slot == 0 {
                        id % qam.order()
                    } else {
                        rng.random_range(0..qam.order())
                    }
                })
                .collect();
            ActiveUser {
                id,
                sequence,
                delay,
                channel,
                data_len,
                data_indices,
            }
        })
        .collect();
    let mut real = TransmissionRealization::from_users(cfg, users)?;
    real.seed = Some(seed);
    Ok(real)
}

impl TransmissionRealization {
    /// Assembles a realization from explicit users.
    pub fn from_users(cfg: &SystemConfig, users: Vec<ActiveUser>) -> Result<Self> {
        cfg.validate()?;
        let qam = Qam::new(cfg.modulation_order);
        let pilot_symbols = vec![PILOT_SYMBOL; cfg.n_pilot];
        let mut x_true = CMatrix::zeros(cfg.n_dict_columns(), cfg.n_columns());
        let mut seen = BTreeSet::new();
        for u in &users {
            if u.sequence >= cfg.n_sequences
                || u.delay > cfg.max_delay
                || u.channel.len() != cfg.n_antennas
                || u.data_len == 0
                || u.data_len > cfg.max_data
                || u.data_indices.len() != u.data_len
                || u.data_indices.iter().any(|&i| i >= qam.order())
                || u.id >= cfg.n_users
                || !seen.insert(u.id)
            {
                return Err(Error::Format {
                    what: "active user",
                    reason: format!("user {} is inconsistent with the configuration", u.id),
                });
            }
            let row = cfg.row_index(u.sequence, u.delay);
            let data = u.data_symbols(&qam, cfg.max_data);
            for slot in 0..cfg.n_slots() {
                let sym = if slot < cfg.n_pilot {
                    pilot_symbols[slot]
                } else {
                    data[slot - cfg.n_pilot]
                };
                for (r, h) in u.channel.iter().enumerate() {
                    x_true[(row, cfg.column_index(slot, r))] += h * sym;
                }
            }
        }
        Ok(TransmissionRealization {
            cfg: cfg.clone(),
            users,
            pilot_symbols,
            x_true,
            seed: None,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn users(&self) -> &[ActiveUser] {
        &self.users
    }

    pub fn pilot_symbols(&self) -> &[Complex64] {
        &self.pilot_symbols
    }

    pub fn x_true(&self) -> &CMatrix {
        &self.x_true
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Occupied `(m, t)` rows and the set of selected sequences.
    pub fn ground_truth_support(&self) -> (BTreeSet<usize>, BTreeSet<usize>) {
        let rows = self
            .users
            .iter()
            .map(|u| self.cfg.row_index(u.sequence, u.delay))
            .collect();
        let seqs = self.users.iter().map(|u| u.sequence).collect();
        (rows, seqs)
    }

    /// Users grouped by occupied row.
    pub fn users_by_row(&self) -> BTreeMap<usize, Vec<&ActiveUser>> {
        let mut map: BTreeMap<usize, Vec<&ActiveUser>> = BTreeMap::new();
        for u in &self.users {
            map.entry(self.cfg.row_index(u.sequence, u.delay)).or_default().push(u);
        }
        map
    }

    /// Rows shared by two or more users (unresolvable collisions).
    pub fn collision_rows(&self) -> BTreeSet<usize> {
        self.users_by_row()
            .into_iter()
            .filter(|(_, us)| us.len() > 1)
            .map(|(row, _)| row)
            .collect()
    }

    /// Pilot block `U` (first `R·L_p` columns of `X`).
    pub fn pilot_block(&self) -> CMatrix {
        self.x_true.columns(0, self.cfg.n_antennas * self.cfg.n_pilot).into_owned()
    }

    /// Short fingerprint of the ground truth, logged to verify paired trials.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for u in &self.users {
            for v in [u.id, u.sequence, u.delay, u.data_len] {
                h.update((v as u64).to_le_bytes());
            }
        }
        for z in self.x_true.iter() {
            h.update(z.re.to_le_bytes());
            h.update(z.im.to_le_bytes());
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nominal_cfg() -> SystemConfig {
        SystemConfig::default()
    }

    #[test]
    fn empty_active_set_gives_zero_matrix() {
        let cfg = SystemConfig { n_active: 0, ..nominal_cfg() };
        let r = draw_realization(&cfg, 1).unwrap();
        assert!(r.x_true().iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        let (rows, seqs) = r.ground_truth_support();
        assert!(rows.is_empty() && seqs.is_empty());
    }

    #[test]
    fn nominal_shape_and_sparsity() {
        let r = draw_realization(&nominal_cfg(), 5).unwrap();
        assert_eq!(r.x_true().shape(), (400, 4));
        let nonzero = (0..400).filter(|&j| r.x_true().row(j).iter().any(|z| z.norm() > 0.0)).count();
        assert!(nonzero <= 24);
        assert_eq!(nonzero, r.ground_truth_support().0.len());
    }

    #[test]
    fn rejects_more_active_than_users() {
        let cfg = SystemConfig { n_users: 3, n_active: 4, ..nominal_cfg() };
        assert!(draw_realization(&cfg, 0).is_err());
    }

    #[test]
    fn single_user_row_matches_hand_expansion() {
        let cfg = nominal_cfg();
        let h = Complex64::new(0.3, -1.1);
        let user = ActiveUser {
            id: 9,
            sequence: 4,
            delay: 2,
            channel: vec![h],
            data_len: 2,
            data_indices: vec![9, 3],
        };
        let r = TransmissionRealization::from_users(&cfg, vec![user]).unwrap();
        let row = 4 * (cfg.guard + 1) + 2;
        let qam = Qam::new(16);
        for j in 0..400 {
            let nz = r.x_true().row(j).iter().any(|z| z.norm() > 0.0);
            assert_eq!(nz, j == row);
        }
        assert_eq!(r.x_true()[(row, 0)], h);
        assert_eq!(r.x_true()[(row, 1)], h * qam.point(9));
        assert_eq!(r.x_true()[(row, 2)], h * qam.point(3));
        assert_eq!(r.x_true()[(row, 3)], Complex64::new(0.0, 0.0));
        let (rows, seqs) = r.ground_truth_support();
        assert_eq!(rows.into_iter().map(|x| x + 1).collect::<Vec<_>>(), vec![19]);
        assert_eq!(seqs.into_iter().map(|x| x + 1).collect::<Vec<_>>(), vec![5]);
    }

    #[test]
    fn shared_row_is_counted_once() {
        let cfg = nominal_cfg();
        let mk = |id| ActiveUser {
            id,
            sequence: 2,
            delay: 1,
            channel: vec![Complex64::new(1.0, 0.0)],
            data_len: 1,
            data_indices: vec![0],
        };
        let r = TransmissionRealization::from_users(&cfg, vec![mk(1), mk(2)]).unwrap();
        let (rows, seqs) = r.ground_truth_support();
        assert_eq!((rows.len(), seqs.len()), (1, 1));
        assert_eq!(r.collision_rows().len(), 1);
    }

    #[test]
    fn trailing_slots_beyond_data_len_are_zero() {
        let cfg = SystemConfig { n_antennas: 2, ..nominal_cfg() };
        let r = draw_realization(&cfg, 17).unwrap();
        for (row, users) in r.users_by_row() {
            let longest = users.iter().map(|u| u.data_len).max().unwrap();
            for slot in cfg.n_pilot + longest..cfg.n_slots() {
                for a in 0..2 {
                    assert_eq!(r.x_true()[(row, cfg.column_index(slot, a))], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn user_id_is_embedded_in_first_symbol() {
        let r = draw_realization(&nominal_cfg(), 3).unwrap();
        for u in r.users() {
            assert_eq!(u.data_indices[0], u.id % 16);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = draw_realization(&nominal_cfg(), 99).unwrap();
        let b = draw_realization(&nominal_cfg(), 99).unwrap();
        assert_eq!(a.users(), b.users());
        assert_eq!(a.x_true(), b.x_true());
        assert_eq!(a.fingerprint(), b.fingerprint());
    }
}
