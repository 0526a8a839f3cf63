use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("trace parse error at {path}:{line}: {msg}")]
    TraceParse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("restseg way (set {set}, way {way}) already occupied")]
    OccupiedWay { set: u64, way: usize },
    #[error("entry not present in restseg (set {set}, way {way})")]
    NotPresent { set: u64, way: usize },
    #[error("virtual page already mapped")]
    AlreadyMapped,
    #[error("virtual page not mapped")]
    NotMapped,
    #[error("out of physical memory and swap space")]
    OutOfMemory,
    #[error("swap space capacity exceeded")]
    OutOfSwap,
    #[error("unknown process {0}")]
    UnknownPid(u32),
    #[error("physical address {0:#x} out of range")]
    AddressRange(u64),
    #[error("reports describe different traces: {0} vs {1}")]
    TraceMismatch(String, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
