use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::recovery::{AmpConfig, DeltaRule, OnsagerCount};
use crate::system_model::ExpandedDictionary;

pub const PARAMS_MAGIC: &str = "gfra-lamp v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Mmv,
    Bp,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Mmv => "mmv",
            Variant::Bp => "bp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mmv" => Some(Variant::Mmv),
            "bp" => Some(Variant::Bp),
            _ => None,
        }
    }
}

/// Trainable parameters of an unrolled network: one tied weight matrix per
/// subnetwork (or one shared by all) and one `α` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LampParams {
    pub variant: Variant,
    pub n_layers: usize,
    pub n_antennas: usize,
    /// Symbol slots `L`; the observation has `R·L` columns.
    pub n_slots: usize,
    pub shared_b: bool,
    /// `Ñ × M̃` weights; index `i − 1` for subnetwork `i` unless shared.
    pub b_matrices: Vec<CMatrix>,
    /// `alphas[i − 1][t]`.
    pub alphas: Vec<Vec<f64>>,
    pub delta: DeltaRule,
    pub onsager_count: OnsagerCount,
    pub first_stage_onsager: bool,
    pub dict_hash: String,
}

impl LampParams {
    /// Parameters that reproduce the model-driven solver: `B = Ŝᴴ` and the
    /// `α` schedule of `amp`.
    pub fn from_amp(
        dict: &ExpandedDictionary,
        amp: &AmpConfig,
        variant: Variant,
        n_antennas: usize,
        n_slots: usize,
        shared_b: bool,
    ) -> Result<Self> {
        amp.validate()?;
        if n_antennas == 0 || n_slots == 0 {
            return Err(Error::config("n_slots", "antenna and slot counts must be positive"));
        }
        let n_sub = match variant {
            Variant::Mmv => 1,
            Variant::Bp => n_slots,
        };
        let n_b = if shared_b { 1 } else { n_sub };
        Ok(LampParams {
            variant,
            n_layers: amp.n_iters,
            n_antennas,
            n_slots,
            shared_b,
            b_matrices: vec![dict.adjoint().clone(); n_b],
            alphas: (0..n_sub)
                .map(|i| {
                    let cols = match variant {
                        Variant::Mmv => n_antennas * n_slots,
                        Variant::Bp => n_antennas * (n_slots - i),
                    };
                    (0..amp.n_iters).map(|t| amp.alpha.get(i, t, cols)).collect()
                })
                .collect(),
            delta: amp.delta,
            onsager_count: amp.onsager_count,
            first_stage_onsager: variant == Variant::Mmv || amp.first_stage_onsager,
            dict_hash: dict.content_hash().to_string(),
        })
    }

    pub fn n_subnetworks(&self) -> usize {
        self.alphas.len()
    }

    /// Weight matrix used by 0-based subnetwork `stage`.
    pub fn b(&self, stage: usize) -> &CMatrix {
        if self.shared_b {
            &self.b_matrices[0]
        } else {
            &self.b_matrices[stage]
        }
    }

    pub fn b_mut(&mut self, stage: usize) -> &mut CMatrix {
        if self.shared_b {
            &mut self.b_matrices[0]
        } else {
            &mut self.b_matrices[stage]
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n_sub = match self.variant {
            Variant::Mmv => 1,
            Variant::Bp => self.n_slots,
        };
        if self.n_layers == 0 || self.n_antennas == 0 || self.n_slots == 0 {
            return Err(Error::config("n_layers", "layer, antenna and slot counts must be positive"));
        }
        if self.alphas.len() != n_sub || self.alphas.iter().any(|a| a.len() != self.n_layers) {
            return Err(Error::config("alphas", "need one entry per subnetwork and layer"));
        }
        if self.alphas.iter().flatten().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::config("alphas", "must be positive and finite"));
        }
        let n_b = if self.shared_b { 1 } else { n_sub };
        if self.b_matrices.len() != n_b {
            return Err(Error::dims("weight matrix count", n_b, self.b_matrices.len()));
        }
        let shape = self.b_matrices[0].shape();
        if self.b_matrices.iter().any(|b| b.shape() != shape) {
            return Err(Error::config("b_matrices", "all weight matrices must have one shape"));
        }
        Ok(())
    }

    /// Checks that the parameters fit `dict` (shape and content hash).
    pub fn check_dictionary(&self, dict: &ExpandedDictionary) -> Result<()> {
        self.validate()?;
        if self.dict_hash != dict.content_hash() {
            return Err(Error::DictionaryHashMismatch {
                expected: self.dict_hash.clone(),
                actual: dict.content_hash().to_string(),
            });
        }
        let want = (dict.n_columns(), dict.n_rows());
        if self.b_matrices[0].shape() != want {
            return Err(Error::dims(
                "weight matrix",
                format!("{}x{}", want.0, want.1),
                format!("{}x{}", self.b_matrices[0].nrows(), self.b_matrices[0].ncols()),
            ));
        }
        Ok(())
    }
}

/// Writes a text header followed by little-endian doubles: all `α` in
/// (subnetwork, layer) order, then every weight matrix row-major as
/// (re, im) pairs.
pub fn save_params(params: &LampParams, path: &Path) -> Result<()> {
    params.validate()?;
    fs::write(path, params_to_bytes(params)).map_err(|e| Error::io("writing parameters", path, e))
}

pub fn params_to_bytes(p: &LampParams) -> Vec<u8> {
    let (rows, cols) = p.b_matrices[0].shape();
    let mut head = String::new();
    let _ = writeln!(head, "{PARAMS_MAGIC}");
    let _ = writeln!(head, "variant = {}", p.variant.as_str());
    let _ = writeln!(head, "n_layers = {}", p.n_layers);
    let _ = writeln!(head, "n_antennas = {}", p.n_antennas);
    let _ = writeln!(head, "n_slots = {}", p.n_slots);
    let _ = writeln!(head, "n_subnetworks = {}", p.n_subnetworks());
    let _ = writeln!(head, "shared_b = {}", p.shared_b);
    let _ = writeln!(head, "b_count = {}", p.b_matrices.len());
    let _ = writeln!(head, "b_shape = {rows}x{cols}");
    let _ = writeln!(head, "delta = {}", p.delta.to_tag());
    let _ = writeln!(head, "onsager_count = {}", p.onsager_count.as_str());
    let _ = writeln!(head, "first_stage_onsager = {}", p.first_stage_onsager);
    let _ = writeln!(head, "dict_hash = {}", p.dict_hash);
    head.push_str("end_header\n");
    let mut out = head.into_bytes();
    for a in p.alphas.iter().flatten() {
        out.extend_from_slice(&a.to_le_bytes());
    }
    for b in &p.b_matrices {
        for i in 0..rows {
            for j in 0..cols {
                out.extend_from_slice(&b[(i, j)].re.to_le_bytes());
                out.extend_from_slice(&b[(i, j)].im.to_le_bytes());
            }
        }
    }
    out
}

pub fn params_from_bytes(bytes: &[u8]) -> Result<LampParams> {
    let bad = |reason: String| Error::Format {
        what: "parameter file",
        reason,
    };
    let marker = b"end_header\n";
    let split = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing end_header".into()))?;
    let head = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8".into()))?;
    let mut body = &bytes[split + marker.len()..];
    let mut lines = head.lines();
    if lines.next() != Some(PARAMS_MAGIC) {
        return Err(bad(format!("missing `{PARAMS_MAGIC}` header")));
    }
    let mut kv = std::collections::BTreeMap::new();
    for line in lines {
        let (k, v) = line.split_once(" = ").ok_or_else(|| bad(format!("bad header line `{line}`")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("missing `{k}`")));
    let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
    let flag = |k: &str| -> Result<bool> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
    let variant = Variant::parse(get("variant")?).ok_or_else(|| bad("unknown variant".into()))?;
    let n_layers = num("n_layers")?;
    let n_sub = num("n_subnetworks")?;
    let b_count = num("b_count")?;
    let (rows, cols) = get("b_shape")?
        .split_once('x')
        .and_then(|(r, c)| Some((r.parse::<usize>().ok()?, c.parse::<usize>().ok()?)))
        .ok_or_else(|| bad("bad `b_shape`".into()))?;
    let expected = 8 * (n_sub * n_layers + 2 * b_count * rows * cols);
    if body.len() != expected {
        return Err(bad(format!("expected {expected} payload bytes, found {}", body.len())));
    }
    let mut take = || {
        let (v, rest) = body.split_at(8);
        body = rest;
        f64::from_le_bytes(v.try_into().expect("8 bytes"))
    };
    let alphas = (0..n_sub).map(|_| (0..n_layers).map(|_| take()).collect()).collect();
    let b_matrices = (0..b_count)
        .map(|_| {
            let vals: Vec<Complex64> = (0..rows * cols).map(|_| Complex64::new(take(), take())).collect();
            CMatrix::from_row_slice(rows, cols, &vals)
        })
        .collect();
    let params = LampParams {
        variant,
        n_layers,
        n_antennas: num("n_antennas")?,
        n_slots: num("n_slots")?,
        shared_b: flag("shared_b")?,
        b_matrices,
        alphas,
        delta: DeltaRule::from_tag(get("delta")?).ok_or_else(|| bad("bad `delta`".into()))?,
        onsager_count: OnsagerCount::parse(get("onsager_count")?).ok_or_else(|| bad("bad `onsager_count`".into()))?,
        first_stage_onsager: flag("first_stage_onsager")?,
        dict_hash: get("dict_hash")?.to_string(),
    };
    params.validate()?;
    Ok(params)
}

pub fn load_params(path: &Path) -> Result<LampParams> {
    let bytes = fs::read(path).map_err(|e| Error::io("reading parameters", path, e))?;
    params_from_bytes(&bytes)
}

/// Loads parameters and checks they were trained for `dict`.
pub fn load_params_for(path: &Path, dict: &ExpandedDictionary) -> Result<LampParams> {
    let p = load_params(path)?;
    p.check_dictionary(dict)?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system_model::{SpreadingPool, SystemConfig};

    fn dict(seed: u64) -> ExpandedDictionary {
        let cfg = SystemConfig {
            n_sequences: 6,
            seq_len: 8,
            guard: 1,
            max_delay: 1,
            n_users: 20,
            n_active: 2,
            ..Default::default()
        };
        ExpandedDictionary::expand(&SpreadingPool::generate(&cfg, seed).unwrap(), cfg.guard)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let d = dict(1);
        let mut p = LampParams::from_amp(&d, &AmpConfig::default(), Variant::Bp, 1, 3, false).unwrap();
        p.alphas[1][2] = 0.1 + 0.2;
        p.b_matrices[2][(3, 4)] = Complex64::new(f64::MIN_POSITIVE, -1e300);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.lamp");
        save_params(&p, &path).unwrap();
        assert_eq!(load_params_for(&path, &d).unwrap(), p);
    }

    #[test]
    fn wrong_dictionary_is_rejected() {
        let p = LampParams::from_amp(&dict(1), &AmpConfig::default(), Variant::Mmv, 1, 2, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.lamp");
        save_params(&p, &path).unwrap();
        assert!(matches!(load_params_for(&path, &dict(2)), Err(Error::DictionaryHashMismatch { .. })));
    }

    #[test]
    fn empty_path_reports_io_context() {
        let err = load_params(Path::new("")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("reading parameters"));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let p = LampParams::from_amp(&dict(1), &AmpConfig::default(), Variant::Mmv, 1, 2, true).unwrap();
        let bytes = params_to_bytes(&p);
        assert!(params_from_bytes(&bytes[..bytes.len() - 3]).is_err());
    }
}
