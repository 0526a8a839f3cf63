//! Restrictive set-associative physical memory segments.
//!
//! A segment holds `N` equal-size physical pages organized as `N/M` sets of
//! `M` ways. A virtual page may live only in the set selected by a hash of
//! its virtual page number. Translation metadata is split across three
//! structures: a per-process tag array (TAR) holding the virtual tag of
//! every way, a per-process set filter (SF) counting the occupied ways of
//! each set so empty sets skip tag matching, and an OS-owned global
//! occupancy table used for allocation and victim selection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::addr::{PageSize, Pfn, Pid, Vpn, VA_BITS};
use crate::error::{Result, SimError};
use crate::replacement::{srrip_victim, RRPV_INSERT};

/// Bits of per-entry metadata stored next to each virtual tag.
pub const TAR_META_BITS: u32 = 10;

/// Metadata bit layout: valid(1) read(1) write(1) execute(1) dirty(1)
/// accessed(1) reserved(4). An invalid entry has all metadata bits zero.
pub mod meta {
    pub const VALID: u16 = 1 << 0;
    pub const READ: u16 = 1 << 1;
    pub const WRITE: u16 = 1 << 2;
    pub const EXECUTE: u16 = 1 << 3;
    pub const DIRTY: u16 = 1 << 4;
    pub const ACCESSED: u16 = 1 << 5;
    pub const MASK: u16 = (1 << 10) - 1;
}

/// Set-index hash function selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashFnId {
    Mod,
    XorFold,
    PrimeDisp,
    MersenneMod,
}

impl HashFnId {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mod" => Some(HashFnId::Mod),
            "xor-fold" | "xorfold" => Some(HashFnId::XorFold),
            "prime-disp" | "primedisp" => Some(HashFnId::PrimeDisp),
            "mersenne-mod" | "mersennemod" => Some(HashFnId::MersenneMod),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HashFnId::Mod => "mod",
            HashFnId::XorFold => "xor-fold",
            HashFnId::PrimeDisp => "prime-disp",
            HashFnId::MersenneMod => "mersenne-mod",
        }
    }
}

/// Multiplier for prime-displacement hashing (Knuth's 2^32 golden ratio prime).
const PRIME_DISP_P: u64 = 2654435761;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestSegConfig {
    /// First physical frame of the segment, in units of `page_size`.
    pub base_frame: u64,
    pub total_bytes: u64,
    pub page_size: PageSize,
    pub associativity: usize,
    pub hash_fn: HashFnId,
}

impl RestSegConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |msg: String| SimError::Config(msg);
        if self.associativity == 0 {
            return Err(cfg_err("restseg associativity must be >= 1".into()));
        }
        if self.total_bytes == 0 || self.total_bytes % self.page_size.bytes() != 0 {
            return Err(cfg_err(format!(
                "restseg size {} not a positive multiple of the page size",
                self.total_bytes
            )));
        }
        let pages = self.total_bytes / self.page_size.bytes();
        if pages % self.associativity as u64 != 0 {
            return Err(cfg_err(format!(
                "restseg page count {pages} not divisible by associativity {}",
                self.associativity
            )));
        }
        let sets = pages / self.associativity as u64;
        if !sets.is_power_of_two() {
            return Err(cfg_err(format!("restseg set count {sets} not a power of two")));
        }
        Ok(())
    }

    pub fn num_pages(&self) -> u64 {
        self.total_bytes / self.page_size.bytes()
    }

    pub fn num_sets(&self) -> u64 {
        self.num_pages() / self.associativity as u64
    }

    pub fn set_index_bits(&self) -> u32 {
        self.num_sets().trailing_zeros()
    }

    /// Width of the virtual page tag stored in each TAR entry.
    pub fn vtag_bits(&self) -> u32 {
        VA_BITS - self.page_size.offset_bits() - self.set_index_bits()
    }

    pub fn tar_entry_bits(&self) -> u32 {
        self.vtag_bits() + TAR_META_BITS
    }

    pub fn sf_counter_bits(&self) -> u32 {
        (self.associativity as u64).ilog2() + 1
    }

    pub fn vtag_of(&self, vpn_number: u64) -> u64 {
        vpn_number >> self.set_index_bits()
    }

    /// One-past-the-end frame number of the segment.
    pub fn end_frame(&self) -> u64 {
        self.base_frame + self.num_pages()
    }
}

/// Total TAR size in bits: N * (48 - log2(page) - log2(N/M) + 10).
pub fn tar_size_bits(cfg: &RestSegConfig) -> u64 {
    cfg.num_pages() * u64::from(cfg.tar_entry_bits())
}

/// Total SF size in bits: (N/M) * (log2(M) + 1).
pub fn sf_size_bits(cfg: &RestSegConfig) -> u64 {
    cfg.num_sets() * u64::from(cfg.sf_counter_bits())
}

/// Set index for a virtual page number under the configured hash function.
pub fn set_index(vpn_number: u64, cfg: &RestSegConfig) -> u64 {
    let sets = cfg.num_sets();
    let mask = sets - 1;
    let k = cfg.set_index_bits();
    match cfg.hash_fn {
        HashFnId::Mod => vpn_number & mask,
        HashFnId::XorFold => {
            if k == 0 {
                return 0;
            }
            let mut acc = 0u64;
            let mut rest = vpn_number;
            while rest != 0 {
                acc ^= rest & mask;
                rest >>= k;
            }
            acc
        }
        HashFnId::PrimeDisp => {
            // (vpn + p * (vpn >> k)) mod num_sets, products taken mod 2^64
            let disp = PRIME_DISP_P.wrapping_mul(vpn_number >> k);
            vpn_number.wrapping_add(disp) & mask
        }
        HashFnId::MersenneMod => {
            // vpn mod (2^m - 1) for the largest Mersenne value <= num_sets
            let m = (sets + 1).ilog2();
            let mersenne = (1u64 << m) - 1;
            if mersenne <= 1 {
                return 0;
            }
            (vpn_number % mersenne) & mask
        }
    }
}

/// One TAR entry: virtual page tag plus 10 metadata bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct TagEntry {
    pub vtag: u64,
    pub meta: u16,
}

impl TagEntry {
    pub fn valid(&self) -> bool {
        self.meta & meta::VALID != 0
    }
}

/// Per-process tag array over every (set, way) of the segment.
#[derive(Debug, Clone)]
pub struct TagArray {
    entries: Vec<TagEntry>,
    ways: usize,
}

impl TagArray {
    pub fn new(cfg: &RestSegConfig) -> Self {
        TagArray {
            entries: vec![TagEntry::default(); cfg.num_pages() as usize],
            ways: cfg.associativity,
        }
    }

    fn slot(&self, set: u64, way: usize) -> usize {
        set as usize * self.ways + way
    }

    pub fn entry(&self, set: u64, way: usize) -> &TagEntry {
        &self.entries[self.slot(set, way)]
    }

    fn entry_mut(&mut self, set: u64, way: usize) -> &mut TagEntry {
        let i = self.slot(set, way);
        &mut self.entries[i]
    }

    /// Bit-accurate image of the array: entries packed back to back,
    /// `vtag_bits + 10` bits each, vtag in the low bits.
    pub fn serialize_bits(&self, cfg: &RestSegConfig) -> (Vec<u8>, u64) {
        let entry_bits = cfg.tar_entry_bits();
        let total_bits = self.entries.len() as u64 * u64::from(entry_bits);
        let mut image = vec![0u8; total_bits.div_ceil(8) as usize];
        for (i, e) in self.entries.iter().enumerate() {
            let word = (u64::from(e.meta & meta::MASK) << cfg.vtag_bits()) | e.vtag;
            push_bits(&mut image, i as u64 * u64::from(entry_bits), word, entry_bits);
        }
        (image, total_bits)
    }
}

/// Per-process per-set occupancy counters.
#[derive(Debug, Clone)]
pub struct SetFilter {
    counters: Vec<u16>,
    counter_bits: u32,
}

impl SetFilter {
    pub fn new(cfg: &RestSegConfig) -> Self {
        SetFilter {
            counters: vec![0; cfg.num_sets() as usize],
            counter_bits: cfg.sf_counter_bits(),
        }
    }

    pub fn count(&self, set: u64) -> u16 {
        self.counters[set as usize]
    }

    pub fn serialize_bits(&self) -> (Vec<u8>, u64) {
        let total_bits = self.counters.len() as u64 * u64::from(self.counter_bits);
        let mut image = vec![0u8; total_bits.div_ceil(8) as usize];
        for (i, c) in self.counters.iter().enumerate() {
            push_bits(
                &mut image,
                i as u64 * u64::from(self.counter_bits),
                u64::from(*c),
                self.counter_bits,
            );
        }
        (image, total_bits)
    }
}

fn push_bits(image: &mut [u8], bit_offset: u64, value: u64, width: u32) {
    for b in 0..width {
        if value >> b & 1 == 1 {
            let pos = bit_offset + u64::from(b);
            image[(pos / 8) as usize] |= 1 << (pos % 8);
        }
    }
}

/// OS-owned occupancy slot covering one (set, way) across all processes.
#[derive(Debug, Clone, Copy, Default)]
pub struct GlobalSlot {
    pub occupied: bool,
    pub owner: Pid,
    pub vpn_number: u64,
    pub rrpv: u8,
    /// RSW hits since this page was inserted (reuse histogram source).
    pub reuse: u64,
}

/// Global tag array: one slot per physical page of the segment.
#[derive(Debug, Clone)]
pub struct GlobalTar {
    slots: Vec<GlobalSlot>,
    ways: usize,
}

impl GlobalTar {
    pub fn new(cfg: &RestSegConfig) -> Self {
        GlobalTar {
            slots: vec![GlobalSlot::default(); cfg.num_pages() as usize],
            ways: cfg.associativity,
        }
    }

    pub fn slot(&self, set: u64, way: usize) -> &GlobalSlot {
        &self.slots[set as usize * self.ways + way]
    }

    fn slot_mut(&mut self, set: u64, way: usize) -> &mut GlobalSlot {
        &mut self.slots[set as usize * self.ways + way]
    }

    /// Lowest-indexed free way of a set, if any.
    pub fn free_way(&self, set: u64) -> Option<usize> {
        (0..self.ways).find(|&w| !self.slot(set, w).occupied)
    }

    pub fn occupied_ways(&self, set: u64) -> usize {
        (0..self.ways).filter(|&w| self.slot(set, w).occupied).count()
    }

    pub fn iter_slots(&self) -> impl Iterator<Item = (u64, usize, &GlobalSlot)> {
        let ways = self.ways;
        self.slots
            .iter()
            .enumerate()
            .map(move |(i, s)| ((i / ways) as u64, i % ways, s))
    }
}

/// Result of one RestSeg walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RswResult {
    Hit { pfn: Pfn, meta: u16, set: u64, way: usize },
    Miss { probed_tar: bool, set: u64 },
}

/// Per-process translation structures plus their kernel image addresses.
#[derive(Debug, Clone)]
pub struct ProcTables {
    pub tar: TagArray,
    pub sf: SetFilter,
    /// Physical base address of the bit-packed TAR image in kernel memory.
    pub tar_base_paddr: u64,
    /// Physical base address of the bit-packed SF image in kernel memory.
    pub sf_base_paddr: u64,
}

/// A restrictive segment with its global occupancy table and the
/// translation structures of every process using it.
#[derive(Debug, Clone)]
pub struct RestSeg {
    pub cfg: RestSegConfig,
    pub global: GlobalTar,
    procs: BTreeMap<Pid, ProcTables>,
}

impl RestSeg {
    pub fn new(cfg: RestSegConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(RestSeg {
            global: GlobalTar::new(&cfg),
            cfg,
            procs: BTreeMap::new(),
        })
    }

    pub fn register_process(&mut self, pid: Pid, tar_base_paddr: u64, sf_base_paddr: u64) {
        self.procs.entry(pid).or_insert_with(|| ProcTables {
            tar: TagArray::new(&self.cfg),
            sf: SetFilter::new(&self.cfg),
            tar_base_paddr,
            sf_base_paddr,
        });
    }

    pub fn tables(&self, pid: Pid) -> Option<&ProcTables> {
        self.procs.get(&pid)
    }

    pub fn set_of(&self, vpn_number: u64) -> u64 {
        set_index(vpn_number, &self.cfg)
    }

    pub fn pfn_for(&self, set: u64, way: usize) -> Pfn {
        Pfn::new(
            self.cfg.base_frame + set * self.cfg.associativity as u64 + way as u64,
            self.cfg.page_size,
        )
    }

    /// RestSeg walk: set filtering then tag matching.
    ///
    /// An empty set (SF counter 0) skips the TAR probe entirely.
    pub fn rsw(&self, vpn: Vpn) -> RswResult {
        debug_assert_eq!(vpn.size, self.cfg.page_size);
        let set = self.set_of(vpn.number);
        let Some(tables) = self.procs.get(&vpn.pid) else {
            return RswResult::Miss { probed_tar: false, set };
        };
        if tables.sf.count(set) == 0 {
            return RswResult::Miss { probed_tar: false, set };
        }
        let vtag = self.cfg.vtag_of(vpn.number);
        for way in 0..self.cfg.associativity {
            let e = tables.tar.entry(set, way);
            if e.valid() && e.vtag == vtag {
                return RswResult::Hit {
                    pfn: self.pfn_for(set, way),
                    meta: e.meta,
                    set,
                    way,
                };
            }
        }
        RswResult::Miss { probed_tar: true, set }
    }

    /// Places a page in an unoccupied (set, way): fills the global slot
    /// (RRPV starts at 2), the owner's TAR entry, and bumps the SF counter.
    pub fn insert(&mut self, vpn: Vpn, set: u64, way: usize) -> Result<()> {
        debug_assert_eq!(vpn.size, self.cfg.page_size);
        if self.global.slot(set, way).occupied {
            return Err(SimError::OccupiedWay { set, way });
        }
        let slot = self.global.slot_mut(set, way);
        *slot = GlobalSlot {
            occupied: true,
            owner: vpn.pid,
            vpn_number: vpn.number,
            rrpv: RRPV_INSERT,
            reuse: 0,
        };
        let vtag = self.cfg.vtag_of(vpn.number);
        let tables = self
            .procs
            .get_mut(&vpn.pid)
            .expect("process registered before insert");
        *tables.tar.entry_mut(set, way) = TagEntry {
            vtag,
            meta: meta::VALID | meta::READ | meta::WRITE,
        };
        tables.sf.counters[set as usize] += 1;
        debug_assert!(tables.sf.counters[set as usize] as usize <= self.cfg.associativity);
        Ok(())
    }

    /// Removes a resident page, returning its accumulated reuse count.
    pub fn remove(&mut self, vpn: Vpn, set: u64, way: usize) -> Result<u64> {
        let slot = self.global.slot(set, way);
        if !slot.occupied || slot.owner != vpn.pid || slot.vpn_number != vpn.number {
            return Err(SimError::NotPresent { set, way });
        }
        let reuse = slot.reuse;
        *self.global.slot_mut(set, way) = GlobalSlot::default();
        let tables = self.procs.get_mut(&vpn.pid).expect("owner has tables");
        *tables.tar.entry_mut(set, way) = TagEntry::default();
        tables.sf.counters[set as usize] -= 1;
        Ok(reuse)
    }

    /// SRRIP victim choice over a fully occupied set. Ages RRPVs in place.
    pub fn select_victim(&mut self, set: u64) -> usize {
        debug_assert!(self.global.free_way(set).is_none(), "set must be full");
        let base = set as usize * self.cfg.associativity;
        let rrpvs = &mut self.global.slots[base..base + self.cfg.associativity];
        let mut vals: Vec<u8> = rrpvs.iter().map(|s| s.rrpv).collect();
        let way = srrip_victim(&mut vals);
        for (s, v) in rrpvs.iter_mut().zip(vals) {
            s.rrpv = v;
        }
        way
    }

    /// Translation hit upkeep: promote to near re-reference, count reuse.
    pub fn note_hit(&mut self, set: u64, way: usize) {
        let slot = self.global.slot_mut(set, way);
        slot.rrpv = 0;
        slot.reuse += 1;
    }

    /// Physical address of the 64-byte TAR line probed for `set`.
    pub fn tar_line_paddr(&self, pid: Pid, set: u64) -> u64 {
        let tables = &self.procs[&pid];
        let bit = set * self.cfg.associativity as u64 * u64::from(self.cfg.tar_entry_bits());
        (tables.tar_base_paddr + bit / 8) & !63
    }

    /// Physical address of the 64-byte SF line probed for `set`.
    pub fn sf_line_paddr(&self, pid: Pid, set: u64) -> u64 {
        let tables = &self.procs[&pid];
        let bit = set * u64::from(self.cfg.sf_counter_bits());
        (tables.sf_base_paddr + bit / 8) & !63
    }

    pub fn tar_image_bytes(&self) -> u64 {
        tar_size_bits(&self.cfg).div_ceil(8)
    }

    pub fn sf_image_bytes(&self) -> u64 {
        sf_size_bits(&self.cfg).div_ceil(8)
    }
}
