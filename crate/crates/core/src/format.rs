/// Decimal scientific notation with 17 significant digits (round-trips every `f64`).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Serializes `∞` as `null` in JSON.
pub(crate) mod serde_time {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &f64, s: S) -> Result<S::Ok, S::Error> {
        if t.is_finite() {
            s.serialize_f64(*t)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
