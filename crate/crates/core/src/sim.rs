//! In-process deployment: `N` server nodes behind a [`Transport`] that only
//! copies bytes.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use crate::config::ProtocolConfig;
use crate::model::Database;
use crate::server::{ServerNode, ServerSetupError, SharedKey};
use crate::session::{Transport, TransportError};

type Tamper = Box<dyn FnMut(&[u8], Vec<u8>) -> Vec<u8> + Send>;

pub struct SimCluster {
    nodes: Vec<ServerNode>,
    inbound: Vec<Vec<Vec<u8>>>,
    down: Vec<bool>,
    tamper: Vec<Option<Tamper>>,
}

impl SimCluster {
    pub fn new(nodes: Vec<ServerNode>) -> Self {
        let n = nodes.len();
        SimCluster {
            nodes,
            inbound: (0..n).map(|_| Vec::new()).collect(),
            down: alloc::vec![false; n],
            tamper: (0..n).map(|_| None).collect(),
        }
    }

    /// One replica per evaluation point of `cfg`, all sharing `key`.
    pub fn deploy(cfg: &ProtocolConfig, db: &Database, key: SharedKey) -> Result<Self, ServerSetupError> {
        let n = cfg.n_servers();
        let nodes = cfg
            .alphas
            .iter()
            .enumerate()
            .map(|(i, a)| ServerNode::new(i + 1, n, cfg.q.get(), a.value(), db.clone(), key))
            .collect::<Result<_, _>>()?;
        Ok(SimCluster::new(nodes))
    }

    pub fn node(&self, n: usize) -> &ServerNode {
        &self.nodes[n]
    }

    /// Every request server `n` (0-based) received, in order.
    pub fn inbound(&self, n: usize) -> &[Vec<u8>] {
        &self.inbound[n]
    }

    pub fn disconnect(&mut self, n: usize) {
        self.down[n] = true;
    }

    /// Rewrites server `n`'s replies; the closure sees the request and the
    /// honest reply.
    pub fn tamper(&mut self, n: usize, f: impl FnMut(&[u8], Vec<u8>) -> Vec<u8> + Send + 'static) {
        self.tamper[n] = Some(Box::new(f));
    }
}

impl Transport for SimCluster {
    fn server_count(&self) -> usize {
        self.nodes.len()
    }

    fn exchange(&mut self, requests: &[(usize, Vec<u8>)]) -> Result<Vec<Vec<u8>>, TransportError> {
        requests
            .iter()
            .map(|(n, req)| {
                let n = *n;
                if n >= self.nodes.len() || self.down[n] {
                    return Err(TransportError {
                        server: n,
                        endpoint: format!("sim://{}", n + 1),
                        message: "server unreachable".into(),
                    });
                }
                self.inbound[n].push(req.clone());
                let reply = self.nodes[n].handle(req);
                Ok(match &mut self.tamper[n] {
                    Some(f) => f(req, reply),
                    None => reply,
                })
            })
            .collect()
    }
}
