use std::io::BufRead;

use crate::error::{Error, Result};

/// Directed link with affine travel time `t_e (1 + b_e l_e / c_e)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// 1-based node ids, as in TNTP files.
    pub tail: usize,
    pub head: usize,
    pub free_flow_time: f64,
    pub capacity: f64,
    pub congestion_coeff: f64,
}

impl Edge {
    /// Slope `b_e t_e / c_e` of the edge cost in its flow.
    pub fn slope(&self) -> f64 {
        self.congestion_coeff * self.free_flow_time / self.capacity
    }

    pub fn cost(&self, flow: f64) -> f64 {
        self.free_flow_time * (1.0 + self.congestion_coeff * flow / self.capacity)
    }

    pub fn touches(&self, node: usize) -> bool {
        self.tail == node || self.head == node
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub nodes: usize,
    pub edges: Vec<Edge>,
}

impl Network {
    pub fn new(nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        for (i, e) in edges.iter().enumerate() {
            if e.tail == 0 || e.head == 0 || e.tail > nodes || e.head > nodes {
                return Err(Error::InvalidArgument(format!(
                    "edge {i} ({}, {}) references a node outside 1..={nodes}",
                    e.tail, e.head
                )));
            }
            if e.tail == e.head {
                return Err(Error::InvalidArgument(format!("edge {i} is a self-loop at node {}", e.tail)));
            }
            if !(e.free_flow_time > 0.0 && e.free_flow_time.is_finite()) {
                return Err(Error::InvalidArgument(format!("edge {i} has free-flow time {}", e.free_flow_time)));
            }
            if !(e.capacity > 0.0 && e.capacity.is_finite()) {
                return Err(Error::InvalidArgument(format!("edge {i} has capacity {}", e.capacity)));
            }
            if !(e.congestion_coeff >= 0.0 && e.congestion_coeff.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "edge {i} has congestion coefficient {}",
                    e.congestion_coeff
                )));
            }
        }
        Ok(Network { nodes, edges })
    }

    /// Same network with every `b_e` replaced by `b`.
    pub fn with_congestion(mut self, b: f64) -> Result<Self> {
        for e in &mut self.edges {
            e.congestion_coeff = b;
        }
        Network::new(self.nodes, self.edges)
    }

    pub fn find_edge(&self, tail: usize, head: usize) -> Option<usize> {
        self.edges.iter().position(|e| e.tail == tail && e.head == head)
    }
}

/// Reads a TNTP `_net.tntp` file.
///
/// Metadata lines `<NUMBER OF NODES> n` and `<NUMBER OF LINKS> m` are required
/// before `<END OF METADATA>`; lines starting with `~` are comments. Each link
/// row holds `tail head capacity length free_flow_time B power speed toll type`
/// terminated by `;`. Only tail, head, capacity and free-flow time are kept;
/// the file's BPR `B`/`power` columns are ignored and `b_e` starts at zero.
pub fn parse_tntp<R: BufRead>(input: R) -> Result<Network> {
    let mut nodes: Option<usize> = None;
    let mut links: Option<usize> = None;
    let mut in_metadata = true;
    let mut edges = Vec::new();

    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('~') {
            continue;
        }
        if in_metadata {
            if trimmed.starts_with("<END OF METADATA>") {
                in_metadata = false;
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('<') {
                let (tag, value) = rest.split_once('>').ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: "unterminated metadata tag".into(),
                })?;
                let parse_count = |v: &str| -> Result<usize> {
                    v.trim().parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("bad count for <{tag}>: {:?}", v.trim()),
                    })
                };
                match tag.trim() {
                    "NUMBER OF NODES" => nodes = Some(parse_count(value)?),
                    "NUMBER OF LINKS" => links = Some(parse_count(value)?),
                    _ => {}
                }
                continue;
            }
            return Err(Error::Parse {
                line: lineno,
                message: "data row before <END OF METADATA>".into(),
            });
        }

        let body = trimmed.trim_end_matches(';').trim();
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() < 5 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected at least 5 fields, found {}", fields.len()),
            });
        }
        let num = |k: usize, name: &str| -> Result<f64> {
            fields[k].parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad {name}: {:?}", fields[k]),
            })
        };
        let id = |k: usize, name: &str| -> Result<usize> {
            fields[k].parse::<usize>().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad {name}: {:?}", fields[k]),
            })
        };
        let tail = id(0, "init node")?;
        let head = id(1, "term node")?;
        let capacity = num(2, "capacity")?;
        num(3, "length")?;
        let free_flow_time = num(4, "free flow time")?;
        let n = nodes.ok_or_else(|| Error::Parse {
            line: lineno,
            message: "missing <NUMBER OF NODES>".into(),
        })?;
        if tail == 0 || head == 0 || tail > n || head > n {
            return Err(Error::Parse {
                line: lineno,
                message: format!("node id out of range 1..={n}: ({tail}, {head})"),
            });
        }
        if tail == head || !(capacity > 0.0) || !(free_flow_time > 0.0) {
            return Err(Error::Parse {
                line: lineno,
                message: "link needs distinct endpoints and positive capacity and free-flow time".into(),
            });
        }
        edges.push(Edge {
            tail,
            head,
            free_flow_time,
            capacity,
            congestion_coeff: 0.0,
        });
    }

    if in_metadata {
        return Err(Error::Parse {
            line: 0,
            message: "missing <END OF METADATA>".into(),
        });
    }
    let nodes = nodes.ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing <NUMBER OF NODES>".into(),
    })?;
    let links = links.ok_or_else(|| Error::Parse {
        line: 0,
        message: "missing <NUMBER OF LINKS>".into(),
    })?;
    if links != edges.len() {
        return Err(Error::Parse {
            line: 0,
            message: format!("<NUMBER OF LINKS> is {links} but {} rows were read", edges.len()),
        });
    }
    Network::new(nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_NODE: &str = "<NUMBER OF ZONES> 2\n<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n\n~ tail head cap len fftt b p s t ty ;\n\t1\t2\t100\t3\t3\t0.15\t4\t0\t0\t1\t;\n";

    #[test]
    fn minimal_file() {
        let net = parse_tntp(TWO_NODE.as_bytes()).unwrap();
        assert_eq!(net.nodes, 2);
        assert_eq!(net.edges.len(), 1);
        assert_eq!(net.edges[0].capacity, 100.0);
        assert_eq!(net.edges[0].free_flow_time, 3.0);
        assert_eq!(net.edges[0].congestion_coeff, 0.0);
    }

    #[test]
    fn comments_are_ignored() {
        let shuffled = "~ leading comment\n<NUMBER OF NODES> 2\n~ between\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n~ a\n~ b\n1 2 100 3 3 0.15 4 0 0 1 ;\n~ trailing\n";
        assert_eq!(
            parse_tntp(shuffled.as_bytes()).unwrap(),
            parse_tntp(TWO_NODE.as_bytes()).unwrap()
        );
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n1 3 100 3 3 ;\n";
        assert!(matches!(parse_tntp(bad.as_bytes()), Err(Error::Parse { line: 4, .. })));
        let bad = "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 1\n<END OF METADATA>\n1 2 x 3 3 ;\n";
        assert!(matches!(parse_tntp(bad.as_bytes()), Err(Error::Parse { line: 4, .. })));
        let bad = "<NUMBER OF LINKS> 1\n<END OF METADATA>\n";
        assert!(matches!(parse_tntp(bad.as_bytes()), Err(Error::Parse { .. })));
        let bad = "<NUMBER OF NODES> 2\n<NUMBER OF LINKS> 2\n<END OF METADATA>\n1 2 100 3 3 ;\n";
        assert!(parse_tntp(bad.as_bytes()).is_err());
    }

    #[test]
    fn edge_cost_is_affine() {
        let e = Edge {
            tail: 1,
            head: 2,
            free_flow_time: 2.0,
            capacity: 50.0,
            congestion_coeff: 100.0,
        };
        assert_eq!(e.slope(), 4.0);
        assert_eq!(e.cost(0.5), 2.0 + 4.0 * 0.5);
    }
}
