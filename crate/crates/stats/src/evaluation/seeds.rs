use sha2::{Digest, Sha256};

/// Seed for a named random substream. The same `(master, name)` always
/// yields the same seed, independent of scheduling or call order.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}
