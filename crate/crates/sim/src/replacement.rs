//! Replacement-policy primitives shared by caches and segment tables.

/// Maximum 2-bit re-reference prediction value (distant re-reference).
pub const RRPV_MAX: u8 = 3;

/// Re-reference value given to a freshly inserted entry.
pub const RRPV_INSERT: u8 = 2;

/// 2-bit SRRIP victim selection over one set.
///
/// Returns the lowest-indexed way whose RRPV is 3; if none exists, ages the
/// whole set (saturating increment) and retries. Mutates the RRPVs in place.
pub fn srrip_victim(rrpv: &mut [u8]) -> usize {
    assert!(!rrpv.is_empty());
    loop {
        if let Some(way) = rrpv.iter().position(|&v| v >= RRPV_MAX) {
            return way;
        }
        for v in rrpv.iter_mut() {
            *v = (*v + 1).min(RRPV_MAX);
        }
    }
}
