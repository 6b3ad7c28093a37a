//! FNV-1a hashing for artifact provenance.
//!
//! Every artifact records the hash of the configuration that produced it, so
//! downstream stages and reruns can detect mismatched inputs. FNV-1a is not
//! cryptographic; it only needs to be stable and platform-independent.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hash of a serializable config, rendered as fixed-width hex.
pub fn config_hash<T: serde::Serialize>(cfg: &T) -> String {
    let json = serde_json::to_string(cfg).expect("config serialization cannot fail");
    format!("{:016x}", fnv1a(json.as_bytes()))
}
