use num_complex::Complex64;

/// Gray-mapped square QAM normalized to unit average power.
///
/// A symbol index splits into an in-phase label (high bits) and a quadrature
/// label (low bits); each label is the Gray code of its amplitude level, so
/// horizontally or vertically adjacent points differ in one bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qam {
    order: usize,
    side: usize,
    bits_per_axis: u32,
    scale: f64,
}

fn gray(n: usize) -> usize {
    n ^ (n >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut n = g;
    while g > 1 {
        g >>= 1;
        n ^= g;
    }
    n
}

impl Qam {
    /// `order` must be a power of four (validated by `SystemConfig`).
    pub fn new(order: usize) -> Self {
        let side = (order as f64).sqrt().round() as usize;
        assert!(side * side == order && side.is_power_of_two() && side >= 2, "unsupported QAM order {order}");
        // E|x|² over the square grid {±1, ±3, …} is 2(M−1)/3.
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        Qam {
            order,
            side,
            bits_per_axis: side.trailing_zeros(),
            scale,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    fn level(&self, pos: usize) -> f64 {
        (2.0 * pos as f64 - (self.side as f64 - 1.0)) * self.scale
    }

    pub fn point(&self, index: usize) -> Complex64 {
        assert!(index < self.order);
        let mask = self.side - 1;
        let i_label = index >> self.bits_per_axis;
        let q_label = index & mask;
        Complex64::new(self.level(gray_inverse(i_label)), self.level(gray_inverse(q_label)))
    }

    fn nearest_pos(&self, v: f64) -> usize {
        let p = ((v / self.scale + (self.side as f64 - 1.0)) / 2.0).round();
        p.clamp(0.0, (self.side - 1) as f64) as usize
    }

    /// Hard decision to the nearest constellation point.
    pub fn decide(&self, z: Complex64) -> usize {
        let i = gray(self.nearest_pos(z.re));
        let q = gray(self.nearest_pos(z.im));
        (i << self.bits_per_axis) | q
    }

    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }

    /// Magnitude of the innermost points.
    pub fn min_magnitude(&self) -> f64 {
        self.scale * std::f64::consts::SQRT_2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_average_power() {
        for m in [4, 16, 64, 256] {
            let q = Qam::new(m);
            let p: f64 = (0..m).map(|i| q.point(i).norm_sqr()).sum::<f64>() / m as f64;
            assert!((p - 1.0).abs() < 1e-12, "{m}: {p}");
        }
    }

    #[test]
    fn qam16_geometry() {
        let q = Qam::new(16);
        assert!((q.min_distance() - 2.0 / 10f64.sqrt()).abs() < 1e-15);
        let mut pts: Vec<_> = (0..16).map(|i| q.point(i)).collect();
        pts.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
        pts.dedup();
        assert_eq!(pts.len(), 16);
    }

    #[test]
    fn decisions_invert_mapping() {
        for m in [4, 16, 64] {
            let q = Qam::new(m);
            for i in 0..m {
                assert_eq!(q.decide(q.point(i)), i);
                let nudged = q.point(i) + Complex64::new(0.3 * q.min_distance(), -0.3 * q.min_distance());
                assert_eq!(q.decide(nudged), i);
            }
        }
    }

    #[test]
    fn neighbours_differ_in_one_bit() {
        let q = Qam::new(64);
        for i in 0..64 {
            for j in 0..64 {
                if (q.point(i) - q.point(j)).norm() < q.min_distance() * 1.0001 && i != j {
                    assert_eq!((i ^ j).count_ones(), 1, "{i} {j}");
                }
            }
        }
    }
}
