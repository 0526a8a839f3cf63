//! Address arithmetic and fundamental identifiers.
//!
//! Virtual addresses are canonical x86-64 style: 48 significant bits. A
//! 4KB page carries a 12-bit offset and walks four radix levels
//! (PML4, PDP, PD, PT); a 2MB page carries a 21-bit offset and terminates
//! its walk at the PD level.

use serde::{Deserialize, Serialize};

/// Number of significant virtual-address bits.
pub const VA_BITS: u32 = 48;

/// Entries per radix page-table node (9 index bits).
pub const RADIX_FANOUT: u64 = 512;

/// Process identifier. Doubles as the ASID tag in the TLBs.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Pid(pub u32);

impl std::fmt::Display for Pid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A 48-bit virtual address. Bits above 47 are zeroed on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VirtAddr(u64);

impl VirtAddr {
    pub fn new(raw: u64) -> Self {
        VirtAddr(raw & ((1u64 << VA_BITS) - 1))
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Supported page sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PageSize {
    /// 4KB page, 12-bit offset.
    Small,
    /// 2MB page, 21-bit offset.
    Large,
}

impl PageSize {
    pub fn bytes(self) -> u64 {
        1u64 << self.offset_bits()
    }

    pub fn offset_bits(self) -> u32 {
        match self {
            PageSize::Small => 12,
            PageSize::Large => 21,
        }
    }

    /// Radix levels touched by a walk: 4 for 4KB, 3 for 2MB (leaf at PD).
    pub fn walk_levels(self) -> usize {
        match self {
            PageSize::Small => 4,
            PageSize::Large => 3,
        }
    }

    pub fn vpn_bits(self) -> u32 {
        VA_BITS - self.offset_bits()
    }
}

/// A per-process virtual page number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vpn {
    pub pid: Pid,
    pub number: u64,
    pub size: PageSize,
}

impl Vpn {
    pub fn new(pid: Pid, vaddr: VirtAddr, size: PageSize) -> Self {
        let (number, _) = split_vaddr(vaddr, size);
        Vpn { pid, number, size }
    }

    pub fn base_vaddr(self) -> VirtAddr {
        VirtAddr::new(self.number << self.size.offset_bits())
    }
}

/// A physical frame number, in units of its own page size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pfn {
    pub number: u64,
    pub size: PageSize,
}

impl Pfn {
    pub fn new(number: u64, size: PageSize) -> Self {
        Pfn { number, size }
    }

    pub fn base_paddr(self) -> u64 {
        self.number * self.size.bytes()
    }
}

/// Splits a virtual address into (virtual page number, page offset).
pub fn split_vaddr(vaddr: VirtAddr, size: PageSize) -> (u64, u64) {
    let v = vaddr.value();
    (v >> size.offset_bits(), v & (size.bytes() - 1))
}

/// 9-bit radix indices for a walk of `vpn_number`, root level first.
///
/// Four indices for a 4KB page (PML4, PDP, PD, PT), three for a 2MB page.
pub fn radix_indices(vpn_number: u64, size: PageSize) -> Vec<u16> {
    let levels = size.walk_levels();
    let mut out = Vec::with_capacity(levels);
    for level in 0..levels {
        let shift = 9 * (levels - 1 - level);
        out.push(((vpn_number >> shift) & 0x1ff) as u16);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent bit-slice oracle: fields carved straight out of the VA.
    fn bit_slice(v: u64, hi: u32, lo: u32) -> u64 {
        (v >> lo) & ((1u64 << (hi - lo + 1)) - 1)
    }

    #[test]
    fn split_zero() {
        assert_eq!(split_vaddr(VirtAddr::new(0), PageSize::Small), (0, 0));
    }

    #[test]
    fn split_small_page() {
        // bit-slice oracle: vpn = bits 47..12, offset = bits 11..0
        let va = VirtAddr::new(0x1234);
        assert_eq!(bit_slice(0x1234, 47, 12), 1);
        assert_eq!(bit_slice(0x1234, 11, 0), 0x234);
        assert_eq!(split_vaddr(va, PageSize::Small), (1, 0x234));
    }

    #[test]
    fn split_large_page() {
        // bit-slice oracle: vpn = bits 47..21, offset = bits 20..0
        let va = VirtAddr::new(0x0020_0fff);
        assert_eq!(bit_slice(0x0020_0fff, 47, 21), 1);
        assert_eq!(bit_slice(0x0020_0fff, 20, 0), 0x000fff);
        assert_eq!(split_vaddr(va, PageSize::Large), (1, 0x000fff));
    }

    #[test]
    fn high_bits_ignored() {
        let va = VirtAddr::new(0xffff_8000_0000_1234);
        assert_eq!(va.value(), 0x8000_0000_1234);
    }

    #[test]
    fn radix_indices_zero() {
        assert_eq!(radix_indices(0, PageSize::Small), vec![0, 0, 0, 0]);
    }

    #[test]
    fn radix_indices_small_all_ones() {
        // bit-slice oracle over bits 47..12 of VA 0x0000_7FFF_FFFF_F000
        let va = VirtAddr::new(0x0000_7FFF_FFFF_F000);
        let (vpn, _) = split_vaddr(va, PageSize::Small);
        for (level, shift) in [(0u32, 39u32), (1, 30), (2, 21), (3, 12)] {
            assert_eq!(bit_slice(va.value(), shift + 8, shift), 511, "level {level}");
        }
        assert_eq!(radix_indices(vpn, PageSize::Small), vec![511, 511, 511, 511]);
    }

    #[test]
    fn radix_indices_large() {
        // bit-slice oracle over bits 47..21 of VA 0x4000_0000
        let va = VirtAddr::new(0x4000_0000);
        let (vpn, _) = split_vaddr(va, PageSize::Large);
        assert_eq!(bit_slice(va.value(), 47, 39), 0);
        assert_eq!(bit_slice(va.value(), 38, 30), 1);
        assert_eq!(bit_slice(va.value(), 29, 21), 0);
        assert_eq!(radix_indices(vpn, PageSize::Large), vec![0, 1, 0]);
    }

    proptest! {
        #[test]
        fn split_round_trip(raw in any::<u64>(), large in any::<bool>()) {
            let size = if large { PageSize::Large } else { PageSize::Small };
            let va = VirtAddr::new(raw);
            let (vpn, off) = split_vaddr(va, size);
            prop_assert!(off < size.bytes());
            prop_assert_eq!(vpn * size.bytes() + off, va.value());
        }

        #[test]
        fn radix_indices_bounded_and_reassemble(raw in any::<u64>(), large in any::<bool>()) {
            let size = if large { PageSize::Large } else { PageSize::Small };
            let va = VirtAddr::new(raw);
            let (vpn, off) = split_vaddr(va, size);
            let idx = radix_indices(vpn, size);
            prop_assert_eq!(idx.len(), size.walk_levels());
            let mut rebuilt = 0u64;
            for i in &idx {
                prop_assert!(*i < 512);
                rebuilt = (rebuilt << 9) | u64::from(*i);
            }
            prop_assert_eq!((rebuilt << size.offset_bits()) | off, va.value());
        }
    }
}
