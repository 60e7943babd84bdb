//! Value-exact text encodings for floating-point payloads: C99-style hex
//! floats for short human-readable arrays and little-endian base64 for bulk
//! tensors.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};

/// Formats `v` as a hex float, e.g. `0x1.8p+1` for 3.0.
pub fn format_hex_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && frac == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 { (0, -1022) } else { (1, exp_bits - 1023) };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{digits}p{exp:+}")
    }
}

/// Parses the output of [`format_hex_f64`].
pub fn parse_hex_f64(s: &str) -> Option<f64> {
    match s {
        "nan" => return Some(f64::NAN),
        "inf" => return Some(f64::INFINITY),
        "-inf" => return Some(f64::NEG_INFINITY),
        _ => {}
    }
    let (negative, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let rest = rest.strip_prefix("0x")?;
    let (mantissa, exp) = rest.split_once('p')?;
    let exp: i64 = exp.parse().ok()?;
    let (lead, digits) = match mantissa.split_once('.') {
        Some((l, d)) => (l, d),
        None => (mantissa, ""),
    };
    if digits.len() > 13 || !digits.chars().all(|c| c.is_ascii_hexdigit()) {
        return None;
    }
    let frac = if digits.is_empty() {
        0
    } else {
        u64::from_str_radix(digits, 16).ok()? << (4 * (13 - digits.len()))
    };
    let exp_bits: u64 = match (lead, exp) {
        ("0", _) if frac == 0 => 0,
        ("0", -1022) => 0,
        ("1", -1022..=1023) => (exp + 1023) as u64,
        _ => return None,
    };
    let bits = ((negative as u64) << 63) | (exp_bits << 52) | frac;
    Some(f64::from_bits(bits))
}

pub fn encode_f64s(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(payload: &str, field: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(payload)
        .map_err(|e| Error::parse(field, format!("invalid base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::parse(field, "payload length is not a multiple of 8"));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn encode_f32s(values: &[f32]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f32s(payload: &str, field: &str) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(payload)
        .map_err(|e| Error::parse(field, format!("invalid base64: {e}")))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::parse(field, "payload length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn hex_array(values: &[f64]) -> Vec<String> {
    values.iter().map(|&v| format_hex_f64(v)).collect()
}

pub fn parse_hex_array(values: &[String], field: &str) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(i, s)| {
            parse_hex_f64(s).ok_or_else(|| Error::parse(format!("{field}[{i}]"), format!("bad hex float {s:?}")))
        })
        .collect()
}

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_hex_values() {
        assert_eq!(format_hex_f64(3.0), "0x1.8p+1");
        assert_eq!(format_hex_f64(1.0), "0x1p+0");
        assert_eq!(format_hex_f64(-0.5), "-0x1p-1");
        assert_eq!(format_hex_f64(0.0), "0x0p+0");
        assert_eq!(parse_hex_f64("-0x0p+0").unwrap().to_bits(), (-0.0f64).to_bits());
        assert_eq!(parse_hex_f64("0x1.8p+1"), Some(3.0));
        assert_eq!(parse_hex_f64("0x1.gp+1"), None);
        assert_eq!(parse_hex_f64("1.5"), None);
    }

    proptest! {
        #[test]
        fn hex_round_trip_is_bit_exact(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(!v.is_nan());
            let back = parse_hex_f64(&format_hex_f64(v)).unwrap();
            prop_assert_eq!(back.to_bits(), bits);
        }

        #[test]
        fn base64_round_trip_is_bit_exact(v in proptest::collection::vec(any::<f64>(), 0..40)) {
            let back = decode_f64s(&encode_f64s(&v), "x").unwrap();
            prop_assert_eq!(
                back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
