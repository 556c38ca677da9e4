//! Operating-system side of the retrieval suite: TCP transport and server
//! loop, database and config files, run manifests, the parallel leakage
//! driver and the `ipcr` command line.

pub mod analysis;
pub mod cli;
pub mod dbfile;
pub mod instances;
pub mod manifest;
pub mod node_config;
pub mod tcp;
