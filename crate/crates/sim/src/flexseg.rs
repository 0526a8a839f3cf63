//! Flexible segment backing: per-process four-level radix page table
//! materialized in simulated physical frames, the physical frame allocator,
//! and the swap space.

use std::collections::HashMap;

use crate::addr::{radix_indices, PageSize, Pfn, Pid, VirtAddr, Vpn, RADIX_FANOUT};
use crate::error::{Result, SimError};

/// Bytes per page-table entry (one 64-bit word).
pub const PTE_BYTES: u64 = 8;

/// Saturation limits of the PTW-tracking counters packed into the 9 spare
/// PTE bits: 4-bit frequency, 5-bit cost.
pub const PTW_FREQ_MAX: u8 = 15;
pub const PTW_COST_MAX: u8 = 31;

const FRAME_BYTES: u64 = 4096;
const LARGE_BYTES: u64 = 2 * 1024 * 1024;

/// Leaf page-table entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pte {
    pub pfn: Pfn,
    pub swap_slot: Option<u64>,
    /// Walks of this page since the counters were last reset.
    pub ptw_freq: u8,
    /// DRAM accesses spent walking this page since last reset.
    pub ptw_cost: u8,
}

impl Pte {
    pub fn present(&self) -> bool {
        self.swap_slot.is_none()
    }

    /// Records one completed L2-TLB-missing walk. Returns true when both
    /// counters have reached their thresholds (migration candidate).
    pub fn record_walk_cost(&mut self, dram_accesses: u64, freq_thr: u8, cost_thr: u8) -> bool {
        self.ptw_freq = self.ptw_freq.saturating_add(1).min(PTW_FREQ_MAX);
        self.ptw_cost = self
            .ptw_cost
            .saturating_add(dram_accesses.min(u64::from(PTW_COST_MAX)) as u8)
            .min(PTW_COST_MAX);
        self.ptw_freq >= freq_thr && self.ptw_cost >= cost_thr
    }
}

#[derive(Debug, Clone, Copy, Default)]
enum PtEntry {
    #[default]
    NotPresent,
    /// Interior entry pointing at the frame of the next-level node.
    Node(u64),
    /// Leaf entry (PT level for 4KB pages, PD level for 2MB pages).
    Leaf(Pte),
}

struct PtNode {
    entries: Box<[PtEntry]>,
}

impl PtNode {
    fn new() -> Self {
        PtNode {
            entries: vec![PtEntry::default(); RADIX_FANOUT as usize].into_boxed_slice(),
        }
    }
}

/// Outcome of a walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PtwOutcome {
    Mapped(Pfn),
    NotMapped,
    Swapped(u64),
}

/// A completed walk: its outcome plus the physical address of every
/// node entry touched, in walk order (root level first).
#[derive(Debug, Clone)]
pub struct PtwResult {
    pub outcome: PtwOutcome,
    pub node_accesses: Vec<u64>,
}

/// Per-process four-level radix page table. Every node occupies one
/// simulated 4KB frame obtained from the frame allocator.
pub struct RadixPageTable {
    root_frame: u64,
    nodes: HashMap<u64, PtNode>,
}

impl RadixPageTable {
    pub fn new(alloc: &mut FrameAllocator) -> Result<Self> {
        let root = alloc
            .alloc_frame(PageSize::Small, FrameKind::PtNode)
            .ok_or(SimError::OutOfMemory)?;
        let mut nodes = HashMap::new();
        nodes.insert(root.number, PtNode::new());
        Ok(RadixPageTable {
            root_frame: root.number,
            nodes,
        })
    }

    pub fn root_frame(&self) -> u64 {
        self.root_frame
    }

    fn entry_paddr(frame: u64, index: u16) -> u64 {
        frame * FRAME_BYTES + u64::from(index) * PTE_BYTES
    }

    /// Walks the table for `vpn`, recording every node entry touched.
    /// The walk descends allocated levels and stops at the first
    /// non-present entry (which still counts as an access).
    pub fn ptw(&self, vpn: Vpn) -> PtwResult {
        let indices = radix_indices(vpn.number, vpn.size);
        let mut accesses = Vec::with_capacity(indices.len());
        let mut frame = self.root_frame;
        for (level, &idx) in indices.iter().enumerate() {
            accesses.push(Self::entry_paddr(frame, idx));
            let node = &self.nodes[&frame];
            match node.entries[idx as usize] {
                PtEntry::NotPresent => {
                    return PtwResult { outcome: PtwOutcome::NotMapped, node_accesses: accesses }
                }
                PtEntry::Node(next) => {
                    if level + 1 == indices.len() {
                        // structural mismatch: asked for a large page where a
                        // PT node hangs off the PD entry
                        return PtwResult {
                            outcome: PtwOutcome::NotMapped,
                            node_accesses: accesses,
                        };
                    }
                    frame = next;
                }
                PtEntry::Leaf(pte) => {
                    if level + 1 != indices.len() {
                        // huge leaf encountered on a 4KB-sized walk
                        return PtwResult {
                            outcome: PtwOutcome::NotMapped,
                            node_accesses: accesses,
                        };
                    }
                    let outcome = match pte.swap_slot {
                        Some(slot) => PtwOutcome::Swapped(slot),
                        None => PtwOutcome::Mapped(pte.pfn),
                    };
                    return PtwResult { outcome, node_accesses: accesses };
                }
            }
        }
        unreachable!("walk always terminates at a leaf or non-present entry")
    }

    /// Size-agnostic walk for the hardware walker: descends 9-bit levels
    /// from the root and stops at whatever leaf (4KB or 2MB) it finds.
    pub fn walk_vaddr(&self, vaddr: VirtAddr) -> (PtwResult, Option<PageSize>) {
        let small_indices = radix_indices(vaddr.value() >> 12, PageSize::Small);
        let mut accesses = Vec::with_capacity(4);
        let mut frame = self.root_frame;
        for (level, &idx) in small_indices.iter().enumerate() {
            accesses.push(Self::entry_paddr(frame, idx));
            match self.nodes[&frame].entries[idx as usize] {
                PtEntry::NotPresent => {
                    return (
                        PtwResult { outcome: PtwOutcome::NotMapped, node_accesses: accesses },
                        None,
                    )
                }
                PtEntry::Node(next) => frame = next,
                PtEntry::Leaf(pte) => {
                    let size = if level == 2 { PageSize::Large } else { PageSize::Small };
                    let outcome = match pte.swap_slot {
                        Some(slot) => PtwOutcome::Swapped(slot),
                        None => PtwOutcome::Mapped(pte.pfn),
                    };
                    return (PtwResult { outcome, node_accesses: accesses }, Some(size));
                }
            }
        }
        unreachable!("PT-level entries are never interior nodes")
    }

    fn leaf_path(&mut self, vpn: Vpn, alloc: &mut FrameAllocator) -> Result<(u64, u16)> {
        let indices = radix_indices(vpn.number, vpn.size);
        let mut frame = self.root_frame;
        for &idx in &indices[..indices.len() - 1] {
            let entry = self.nodes.get_mut(&frame).unwrap().entries[idx as usize];
            frame = match entry {
                PtEntry::Node(next) => next,
                PtEntry::NotPresent => {
                    let child = alloc
                        .alloc_frame(PageSize::Small, FrameKind::PtNode)
                        .ok_or(SimError::OutOfMemory)?;
                    self.nodes.insert(child.number, PtNode::new());
                    self.nodes.get_mut(&frame).unwrap().entries[idx as usize] =
                        PtEntry::Node(child.number);
                    child.number
                }
                PtEntry::Leaf(_) => return Err(SimError::AlreadyMapped),
            };
        }
        Ok((frame, *indices.last().unwrap()))
    }

    /// Installs a present mapping, allocating interior nodes on demand.
    pub fn map(&mut self, vpn: Vpn, pfn: Pfn, alloc: &mut FrameAllocator) -> Result<()> {
        let (frame, idx) = self.leaf_path(vpn, alloc)?;
        let node = self.nodes.get_mut(&frame).unwrap();
        match node.entries[idx as usize] {
            PtEntry::NotPresent => {
                node.entries[idx as usize] = PtEntry::Leaf(Pte {
                    pfn,
                    swap_slot: None,
                    ptw_freq: 0,
                    ptw_cost: 0,
                });
                Ok(())
            }
            _ => Err(SimError::AlreadyMapped),
        }
    }

    /// Clears a leaf entry and resets its counters. Interior nodes are
    /// retained (and stay accounted as PT-node frames).
    pub fn unmap(&mut self, vpn: Vpn) -> Result<Pte> {
        let (frame, idx) = self.locate_leaf(vpn).ok_or(SimError::NotMapped)?;
        let node = self.nodes.get_mut(&frame).unwrap();
        match node.entries[idx as usize] {
            PtEntry::Leaf(pte) => {
                node.entries[idx as usize] = PtEntry::NotPresent;
                Ok(pte)
            }
            _ => Err(SimError::NotMapped),
        }
    }

    fn locate_leaf(&self, vpn: Vpn) -> Option<(u64, u16)> {
        let indices = radix_indices(vpn.number, vpn.size);
        let mut frame = self.root_frame;
        for &idx in &indices[..indices.len() - 1] {
            match self.nodes[&frame].entries[idx as usize] {
                PtEntry::Node(next) => frame = next,
                _ => return None,
            }
        }
        Some((frame, *indices.last().unwrap()))
    }

    pub fn leaf(&self, vpn: Vpn) -> Option<Pte> {
        let (frame, idx) = self.locate_leaf(vpn)?;
        match self.nodes[&frame].entries[idx as usize] {
            PtEntry::Leaf(pte) => Some(pte),
            _ => None,
        }
    }

    pub fn leaf_update<F: FnOnce(&mut Pte)>(&mut self, vpn: Vpn, f: F) -> Result<()> {
        let (frame, idx) = self.locate_leaf(vpn).ok_or(SimError::NotMapped)?;
        match &mut self.nodes.get_mut(&frame).unwrap().entries[idx as usize] {
            PtEntry::Leaf(pte) => {
                f(pte);
                Ok(())
            }
            _ => Err(SimError::NotMapped),
        }
    }

    /// Marks a mapped page as swapped out to `slot`; counters reset.
    pub fn set_swapped(&mut self, vpn: Vpn, slot: u64) -> Result<()> {
        self.leaf_update(vpn, |pte| {
            pte.swap_slot = Some(slot);
            pte.ptw_freq = 0;
            pte.ptw_cost = 0;
        })
    }

    /// Re-installs a swapped page at `pfn`.
    pub fn set_present(&mut self, vpn: Vpn, pfn: Pfn) -> Result<()> {
        self.leaf_update(vpn, |pte| {
            pte.pfn = pfn;
            pte.swap_slot = None;
            pte.ptw_freq = 0;
            pte.ptw_cost = 0;
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

/// What a physical frame is used for. The allocator hands out frames for
/// page-table nodes and data pages; restseg frames are reserved at boot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    PtNode,
    Data,
}

/// Physical frame allocator over the flexible-segment byte range.
///
/// 4KB frames grow upward from the bottom of the pool and 2MB chunks grow
/// downward from the (2MB-aligned) top, each side with its own free list,
/// so large allocations never need buddy-style coalescing.
pub struct FrameAllocator {
    pool_base: u64,
    pool_end: u64,
    small_bump: u64,
    large_floor: u64,
    free_small: Vec<u64>,
    free_large: Vec<u64>,
    total_frames: u64,
    restseg_frames: u64,
    pt_frames: u64,
    data_small: u64,
    data_large: u64,
}

impl FrameAllocator {
    /// `pool` is the byte range left over after the boot-time restseg
    /// carve-out; `total_bytes` is the whole physical memory.
    pub fn new(total_bytes: u64, pool_base: u64, pool_end: u64) -> Self {
        debug_assert!(pool_base <= pool_end && pool_end <= total_bytes);
        debug_assert_eq!(pool_base % FRAME_BYTES, 0);
        debug_assert_eq!(pool_end % FRAME_BYTES, 0);
        let large_floor = pool_end & !(LARGE_BYTES - 1);
        FrameAllocator {
            pool_base,
            pool_end,
            small_bump: pool_base,
            large_floor: large_floor.max(pool_base),
            free_small: Vec::new(),
            free_large: Vec::new(),
            total_frames: total_bytes / FRAME_BYTES,
            restseg_frames: pool_base / FRAME_BYTES + (total_bytes - pool_end) / FRAME_BYTES,
            pt_frames: 0,
            data_small: 0,
            data_large: 0,
        }
    }

    fn note_alloc(&mut self, size: PageSize, kind: FrameKind) {
        match (size, kind) {
            (PageSize::Small, FrameKind::PtNode) => self.pt_frames += 1,
            (PageSize::Small, FrameKind::Data) => self.data_small += 1,
            (PageSize::Large, FrameKind::Data) => self.data_large += 1,
            (PageSize::Large, FrameKind::PtNode) => unreachable!("PT nodes are 4KB"),
        }
    }

    pub fn alloc_frame(&mut self, size: PageSize, kind: FrameKind) -> Option<Pfn> {
        let addr = match size {
            PageSize::Small => {
                if let Some(a) = self.free_small.pop() {
                    Some(a)
                } else if self.small_bump + FRAME_BYTES <= self.large_floor {
                    let a = self.small_bump;
                    self.small_bump += FRAME_BYTES;
                    Some(a)
                } else {
                    None
                }
            }
            PageSize::Large => {
                if let Some(a) = self.free_large.pop() {
                    Some(a)
                } else if self.large_floor >= self.small_bump + LARGE_BYTES
                    && self.large_floor >= LARGE_BYTES
                {
                    self.large_floor -= LARGE_BYTES;
                    Some(self.large_floor)
                } else {
                    None
                }
            }
        }?;
        self.note_alloc(size, kind);
        Some(Pfn::new(addr / size.bytes(), size))
    }

    pub fn free_frame(&mut self, pfn: Pfn, kind: FrameKind) {
        let addr = pfn.base_paddr();
        match pfn.size {
            PageSize::Small => {
                self.free_small.push(addr);
                match kind {
                    FrameKind::PtNode => self.pt_frames -= 1,
                    FrameKind::Data => self.data_small -= 1,
                }
            }
            PageSize::Large => {
                self.free_large.push(addr);
                self.data_large -= 1;
            }
        }
    }

    pub fn free_frames(&self) -> u64 {
        (self.large_floor - self.small_bump) / FRAME_BYTES
            + self.free_small.len() as u64
            + self.free_large.len() as u64 * (LARGE_BYTES / FRAME_BYTES)
    }

    pub fn total_frames(&self) -> u64 {
        self.total_frames
    }

    pub fn restseg_frames(&self) -> u64 {
        self.restseg_frames
    }

    pub fn pt_frames(&self) -> u64 {
        self.pt_frames
    }

    pub fn data_frames(&self) -> u64 {
        self.data_small + self.data_large * (LARGE_BYTES / FRAME_BYTES)
    }

    /// Frame conservation: free + PT-node + data-mapped + restseg-reserved
    /// always equals the total frame count.
    pub fn conservation_holds(&self) -> bool {
        self.free_frames() + self.pt_frames + self.data_frames() + self.restseg_frames
            == self.total_frames
    }

    pub fn pool_range(&self) -> (u64, u64) {
        (self.pool_base, self.pool_end)
    }
}

/// Swap space: an area of the storage device holding evicted pages.
pub struct SwapSpace {
    capacity_bytes: u64,
    used_bytes: u64,
    slots: HashMap<Vpn, u64>,
    next_slot: u64,
    pub swap_ins: u64,
    pub swap_outs: u64,
}

impl SwapSpace {
    pub fn new(capacity_bytes: u64) -> Self {
        SwapSpace {
            capacity_bytes,
            used_bytes: 0,
            slots: HashMap::new(),
            next_slot: 0,
            swap_ins: 0,
            swap_outs: 0,
        }
    }

    pub fn slot_of(&self, vpn: Vpn) -> Option<u64> {
        self.slots.get(&vpn).copied()
    }

    pub fn swap_out(&mut self, vpn: Vpn) -> Result<u64> {
        debug_assert!(!self.slots.contains_key(&vpn), "page cannot be swapped twice");
        let bytes = vpn.size.bytes();
        if self.used_bytes + bytes > self.capacity_bytes {
            return Err(SimError::OutOfSwap);
        }
        let slot = self.next_slot;
        self.next_slot += 1;
        self.used_bytes += bytes;
        self.slots.insert(vpn, slot);
        self.swap_outs += 1;
        Ok(slot)
    }

    pub fn swap_in(&mut self, vpn: Vpn) -> Result<u64> {
        let slot = self.slots.remove(&vpn).ok_or(SimError::NotMapped)?;
        self.used_bytes -= vpn.size.bytes();
        self.swap_ins += 1;
        Ok(slot)
    }

    pub fn accesses(&self) -> u64 {
        self.swap_ins + self.swap_outs
    }
}
