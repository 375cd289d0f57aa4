use super::{AudioBuffer, SignalError};

/// Returned by [`psnr`] when the test signal matches the reference exactly.
pub const PSNR_IDENTICAL: f64 = f64::INFINITY;

/// Peak signal-to-noise ratio in dB, `10·log10(MAX²/MSE)`.
///
/// `MAX` is the peak absolute sample of `reference`; MSE runs over every
/// sample of every channel.
pub fn psnr(reference: &AudioBuffer, test: &AudioBuffer) -> Result<f64, SignalError> {
    reference.require_same_shape(test)?;
    let n = reference.num_channels() * reference.num_frames();
    let sse: f64 = reference
        .channels()
        .iter()
        .zip(test.channels())
        .flat_map(|(a, b)| a.iter().zip(b))
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    if sse == 0.0 {
        return Ok(PSNR_IDENTICAL);
    }
    let mse = sse / n as f64;
    let peak = reference.peak();
    Ok(10.0 * (peak * peak / mse).log10())
}

/// JSON encoding for dB values that may be infinite: finite values are
/// numbers, infinities are the strings `"inf"` / `"-inf"`.
pub mod db_json {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(D::Error::custom(format!("not a dB value: {other}"))),
            },
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => super::serialize(x, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}
