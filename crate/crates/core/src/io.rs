//! Serialization helpers: rational strings, result files, CSV and SVG output.

/// Serde adapter for a single rational as `"p/q"`.
pub mod rational_str {
    use rug::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::scalar::fmt_rational(q))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        crate::scalar::parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for an optional rational.
pub mod opt_rational_str {
    use rug::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
        match q {
            Some(q) => s.serialize_some(&crate::scalar::fmt_rational(q)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rational>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| crate::scalar::parse_rational(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

/// Serde adapter for a rational vector.
pub mod vec_rational_str {
    use rug::Rational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(crate::scalar::fmt_rational).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| crate::scalar::parse_rational(s).map_err(serde::de::Error::custom)).collect()
    }
}

/// Serde adapter for a list of rational vectors.
pub mod mat_rational_str {
    use rug::Rational;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &[Vec<Rational>], s: S) -> Result<S::Ok, S::Error> {
        m.iter()
            .map(|r| r.iter().map(crate::scalar::fmt_rational).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Rational>>, D::Error> {
        let m = Vec::<Vec<String>>::deserialize(d)?;
        m.iter()
            .map(|r| r.iter().map(|s| crate::scalar::parse_rational(s).map_err(serde::de::Error::custom)).collect())
            .collect()
    }
}
