//! Trace-driven simulator of virtual-to-physical address translation.
//!
//! Physical memory is managed as two kinds of segments: restrictive
//! set-associative segments resolved by a hashed tag lookup (RestSeg) and
//! conventional flexible segments backed by a four-level radix page table
//! (FlexSeg). The translation pipeline models L1/L2 TLBs, page-walk caches,
//! TAR/SF metadata caches and a parallel RestSeg walk, on top of a
//! physically-addressed cache hierarchy and banked open-row DRAM. An OS
//! policy layer handles page faults, swap, and walk-cost-driven page
//! migration between segment kinds.

pub mod addr;
pub mod error;
pub mod flexseg;
pub mod memsys;
pub mod replacement;
pub mod restseg;
pub mod trace;

pub use addr::{PageSize, Pfn, Pid, VirtAddr, Vpn};
pub use error::{Result, SimError};
