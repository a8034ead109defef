//! Gauss-Kronrod (7, 15) rules laid out on fixed-width panels.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod abscissae (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Quadrature nodes with Kronrod weights and the embedded Gauss weights
/// (zero at Kronrod-only nodes).
#[derive(Debug, Clone, Default)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub kronrod: Vec<f64>,
    pub gauss: Vec<f64>,
    /// Index of the first node of every panel, plus a final end marker.
    pub panel_start: Vec<usize>,
}

impl PanelRule {
    /// Splits `[a, b]` into panels no wider than `width`.
    pub fn uniform(a: f64, b: f64, width: f64) -> Self {
        let panels = (((b - a) / width).ceil() as usize).max(1);
        let h = (b - a) / panels as f64;
        let mut rule = PanelRule::default();
        for p in 0..panels {
            let lo = a + p as f64 * h;
            rule.push_panel(lo, lo + h);
        }
        rule.panel_start.push(rule.nodes.len());
        rule
    }

    fn push_panel(&mut self, lo: f64, hi: f64) {
        self.panel_start.push(self.nodes.len());
        let c = 0.5 * (lo + hi);
        let r = 0.5 * (hi - lo);
        for j in 0..15 {
            let (x, wk, wg) = if j < 7 {
                (-XGK[j], WGK[j], gauss_weight(j))
            } else {
                let k = 14 - j;
                (XGK[k], WGK[k], gauss_weight(k))
            };
            self.nodes.push(c + r * x);
            self.kronrod.push(r * wk);
            self.gauss.push(r * wg);
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Kronrod estimate and the summed per-panel |Kronrod − Gauss| error bound
    /// for integrand values given at the nodes.
    pub fn integrate(&self, values: &[f64]) -> (f64, f64) {
        let mut total = 0.0;
        let mut err = 0.0;
        for w in self.panel_start.windows(2) {
            let (mut k, mut g) = (0.0, 0.0);
            for i in w[0]..w[1] {
                k += self.kronrod[i] * values[i];
                g += self.gauss[i] * values[i];
            }
            total += k;
            err += (k - g).abs();
        }
        (total, err)
    }
}

fn gauss_weight(k: usize) -> f64 {
    if k % 2 == 1 {
        WG[k / 2]
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = PanelRule::uniform(0.0, 2.0, 0.5);
        let vals: Vec<f64> = rule.nodes.iter().map(|x| x.powi(9) - 3.0 * x * x).collect();
        let (v, e) = rule.integrate(&vals);
        assert!((v - (1024.0 / 10.0 - 8.0)).abs() < 1e-11);
        assert!(e < 1e-9);
    }

    #[test]
    fn oscillatory_integral_matches_closed_form() {
        let rule = PanelRule::uniform(0.0, 50.0, 0.2);
        let vals: Vec<f64> = rule.nodes.iter().map(|x| (3.0 * x).sin()).collect();
        let (v, _) = rule.integrate(&vals);
        assert!((v - (1.0 - (150.0f64).cos()) / 3.0).abs() < 1e-12);
    }
}
