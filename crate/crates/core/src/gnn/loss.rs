use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight of the anomalous class in the cross-entropy; benign nodes weigh 1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawWeight", into = "RawWeight")]
pub enum ClassWeight {
    /// `#benign / #anomalous` over the training split.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawWeight {
    Value(f64),
    Name(String),
}

impl TryFrom<RawWeight> for ClassWeight {
    type Error = String;

    fn try_from(raw: RawWeight) -> Result<Self, String> {
        match raw {
            RawWeight::Value(v) => Ok(ClassWeight::Fixed(v)),
            RawWeight::Name(s) if s == "auto" => Ok(ClassWeight::Auto),
            RawWeight::Name(s) => Err(format!("class_weight must be \"auto\" or a number, got {s:?}")),
        }
    }
}

impl From<ClassWeight> for RawWeight {
    fn from(w: ClassWeight) -> Self {
        match w {
            ClassWeight::Auto => RawWeight::Name("auto".into()),
            ClassWeight::Fixed(v) => RawWeight::Value(v),
        }
    }
}

impl ClassWeight {
    pub fn resolve(self, labels: &[u8], train_mask: &[bool]) -> Result<f64> {
        match self {
            ClassWeight::Fixed(w) if w.is_finite() && w > 0.0 => Ok(w),
            ClassWeight::Fixed(w) => Err(Error::Config(format!("class weight {w} must be positive"))),
            ClassWeight::Auto => {
                let (mut pos, mut neg) = (0usize, 0usize);
                for (&l, _) in labels.iter().zip(train_mask).filter(|(_, &m)| m) {
                    if l == 1 {
                        pos += 1;
                    } else {
                        neg += 1;
                    }
                }
                if pos == 0 {
                    return Err(Error::Config(
                        "training split has no anomalies, so the automatic class weight is undefined; \
                         set class_weight to a number"
                            .into(),
                    ));
                }
                Ok(neg as f64 / pos as f64)
            }
        }
    }
}

/// Mean over masked nodes of `w_y * -log softmax(logits)_y`, with its
/// gradient with respect to the logits.
pub fn weighted_cross_entropy(
    logits: &DMatrix<f64>,
    labels: &[u8],
    mask: &[bool],
    anomaly_weight: f64,
) -> Result<(f64, DMatrix<f64>)> {
    if logits.nrows() != labels.len() || mask.len() != labels.len() || logits.ncols() != 2 {
        return Err(Error::Shape(format!(
            "logits {}x{}, {} labels, {} mask entries",
            logits.nrows(),
            logits.ncols(),
            labels.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Precondition("loss mask selects no nodes".into()));
    }
    let mut loss = 0.0;
    let mut grad = DMatrix::zeros(logits.nrows(), 2);
    for i in (0..labels.len()).filter(|&i| mask[i]) {
        let (a, b) = (logits[(i, 0)], logits[(i, 1)]);
        let mx = a.max(b);
        let lse = mx + ((a - mx).exp() + (b - mx).exp()).ln();
        let y = labels[i] as usize;
        let w = if y == 1 { anomaly_weight } else { 1.0 };
        loss += w * (lse - logits[(i, y)]);
        for c in 0..2 {
            let p = (logits[(i, c)] - lse).exp();
            let t = if c == y { 1.0 } else { 0.0 };
            grad[(i, c)] = w * (p - t) / count as f64;
        }
    }
    Ok((loss / count as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_node_toy() {
        let logits = DMatrix::from_row_slice(3, 2, &[0.2, -0.4, 1.0, 1.5, -0.3, 0.1]);
        let labels = [0, 1, 1];
        let (loss, _) = weighted_cross_entropy(&logits, &labels, &[true; 3], 2.0).unwrap();
        let nll = |a: f64, b: f64, y: usize| {
            let z = a.exp() + b.exp();
            -([a, b][y].exp() / z).ln()
        };
        let expect = (nll(0.2, -0.4, 0) + 2.0 * nll(1.0, 1.5, 1) + 2.0 * nll(-0.3, 0.1, 1)) / 3.0;
        assert!((loss - expect).abs() < 1e-14);
    }

    #[test]
    fn saturated_logits() {
        let logits = DMatrix::from_row_slice(2, 2, &[50.0, -50.0, -50.0, 50.0]);
        let (loss, _) = weighted_cross_entropy(&logits, &[0, 1], &[true, true], 3.0).unwrap();
        assert!(loss < 1e-40);
    }

    #[test]
    fn balanced_auto_weight_is_one() {
        let w = ClassWeight::Auto.resolve(&[0, 1, 0, 1], &[true; 4]).unwrap();
        assert_eq!(w, 1.0);
        let w = ClassWeight::Auto.resolve(&[0, 0, 0, 1, 1], &[true, true, true, true, false]).unwrap();
        assert_eq!(w, 3.0);
    }

    #[test]
    fn auto_without_anomalies_fails() {
        let err = ClassWeight::Auto.resolve(&[0, 0, 1], &[true, true, false]).unwrap_err();
        assert!(err.to_string().contains("class_weight"));
    }

    #[test]
    fn serde_forms() {
        #[derive(Deserialize, Serialize)]
        struct W {
            w: ClassWeight,
        }
        let a: W = toml::from_str("w = \"auto\"").unwrap();
        assert_eq!(a.w, ClassWeight::Auto);
        let b: W = toml::from_str("w = 2.5").unwrap();
        assert_eq!(b.w, ClassWeight::Fixed(2.5));
        assert!(toml::from_str::<W>("w = \"heavy\"").is_err());
    }
}
