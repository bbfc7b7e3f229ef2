use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Reference distribution for a two-sided coefficient test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "df")]
pub enum Reference {
    StudentT(f64),
    Normal,
}

/// Two-sided tail probability `2 * (1 - CDF(|statistic|))`.
///
/// Evaluated through the survival function so that large statistics do not
/// lose precision to cancellation. Non-finite statistics map to 0 (infinite)
/// or NaN (NaN).
pub fn tail_p_value(statistic: f64, reference: Reference) -> f64 {
    if statistic.is_nan() {
        return f64::NAN;
    }
    let x = statistic.abs();
    if x == 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    let upper = match reference {
        Reference::Normal => Normal::standard().sf(x),
        Reference::StudentT(df) => {
            assert!(df >= 1.0, "student-t degrees of freedom must be >= 1, got {df}");
            StudentsT::new(0.0, 1.0, df).expect("valid student-t parameters").sf(x)
        }
    };
    (2.0 * upper).clamp(0.0, 1.0)
}
