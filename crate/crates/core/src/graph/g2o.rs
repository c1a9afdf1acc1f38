//! g2o text format: `VERTEX_SE2`, `EDGE_SE2`, `VERTEX_SE3:QUAT`,
//! `EDGE_SE3:QUAT`, plus a multi-agent extension:
//!
//! * `AGENT k` scopes the vertices that follow to agent `k`;
//! * `EDGE_INTER i j <payload>` is an inter-agent edge whose payload is the
//!   same as an `EDGE_SE2` (9 numbers) or `EDGE_SE3:QUAT` (28 numbers) record.
//!
//! Information matrices are listed as the row-major upper triangle.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path as FsPath;

use thiserror::Error;

use super::{Edge, EdgeId, EdgeKind, GraphError, PoseGraph, VertexId};
use crate::lie::{Information, Pose, Se2, Se3};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum G2oError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unsupported record type `{tag}`")]
    Unsupported { line: usize, tag: String },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
    #[error("line {line}: replay callback failed: {source}")]
    Callback { line: usize, source: BoxError },
}

fn parse_err(line: usize, msg: impl Into<String>) -> G2oError {
    G2oError::Parse { line, msg: msg.into() }
}

fn numbers(line: usize, toks: &[&str]) -> Result<Vec<f64>, G2oError> {
    toks.iter().map(|t| t.parse::<f64>().map_err(|_| parse_err(line, format!("bad number `{t}`")))).collect()
}

fn id(line: usize, tok: Option<&&str>) -> Result<u64, G2oError> {
    let t = tok.ok_or_else(|| parse_err(line, "missing vertex id"))?;
    t.parse::<u64>().map_err(|_| parse_err(line, format!("bad vertex id `{t}`")))
}

fn expect_len(line: usize, tag: &str, got: usize, want: usize) -> Result<(), G2oError> {
    if got != want {
        return Err(parse_err(line, format!("{tag} needs {want} values, found {got}")));
    }
    Ok(())
}

fn edge_payload(line: usize, vals: &[f64]) -> Result<(Pose, Information), G2oError> {
    let info_err = |e| G2oError::Graph { line, source: GraphError::Lie(e) };
    match vals.len() {
        9 => {
            let pose = Pose::Se2(Se2::new(vals[0], vals[1], vals[2]));
            let info = Information::from_upper_triangle(3, &vals[3..]).map_err(info_err)?;
            Ok((pose, info))
        }
        28 => {
            let pose = Pose::Se3(Se3::from_xyz_quat([vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5], vals[6]]));
            let info = Information::from_upper_triangle(6, &vals[7..]).map_err(info_err)?;
            Ok((pose, info))
        }
        n => Err(parse_err(line, format!("edge payload must have 9 or 28 values, found {n}"))),
    }
}

/// Streams records into a graph, invoking `on_edge` after each edge insertion.
fn replay_reader<R, F, E>(reader: R, mut on_edge: F) -> Result<PoseGraph, G2oError>
where
    R: BufRead,
    F: FnMut(&PoseGraph, EdgeId) -> Result<(), E>,
    E: Into<BoxError>,
{
    let mut graph = PoseGraph::new();
    let mut ids: HashMap<u64, VertexId> = HashMap::new();
    let mut agent = 0u32;
    for (idx, text) in reader.lines().enumerate() {
        let line = idx + 1;
        let text = text?;
        let content = text.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some(&tag) = toks.first() else { continue };
        match tag {
            "AGENT" => {
                expect_len(line, tag, toks.len() - 1, 1)?;
                agent = toks[1].parse().map_err(|_| parse_err(line, "bad agent id"))?;
            }
            "VERTEX_SE2" | "VERTEX_SE3:QUAT" => {
                let ext = id(line, toks.get(1))?;
                let vals = numbers(line, &toks[2..])?;
                let pose = if tag == "VERTEX_SE2" {
                    expect_len(line, tag, vals.len(), 3)?;
                    Pose::Se2(Se2::new(vals[0], vals[1], vals[2]))
                } else {
                    expect_len(line, tag, vals.len(), 7)?;
                    Pose::Se3(Se3::from_xyz_quat([vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5], vals[6]]))
                };
                if ids.contains_key(&ext) {
                    return Err(parse_err(line, format!("duplicate vertex id {ext}")));
                }
                let v = graph.push_vertex(agent, Some(ext), Some(pose));
                ids.insert(ext, v);
            }
            "EDGE_SE2" | "EDGE_SE3:QUAT" | "EDGE_INTER" => {
                let (a, b) = (id(line, toks.get(1))?, id(line, toks.get(2))?);
                let vals = numbers(line, &toks[3..])?;
                match tag {
                    "EDGE_SE2" => expect_len(line, tag, vals.len(), 9)?,
                    "EDGE_SE3:QUAT" => expect_len(line, tag, vals.len(), 28)?,
                    _ => {}
                }
                let (measurement, info) = edge_payload(line, &vals)?;
                let lookup = |x: u64| {
                    ids.get(&x).copied().ok_or_else(|| parse_err(line, format!("edge references unknown vertex {x}")))
                };
                let (from, to) = (lookup(a)?, lookup(b)?);
                let kind = if tag == "EDGE_INTER" {
                    EdgeKind::InterAgent
                } else if b == a + 1 {
                    EdgeKind::Odometry
                } else {
                    EdgeKind::LoopClosure
                };
                let e = graph
                    .add_edge(Edge::new(from, to, measurement, info, kind))
                    .map_err(|source| G2oError::Graph { line, source })?;
                on_edge(&graph, e).map_err(|source| G2oError::Callback { line, source: source.into() })?;
            }
            // Gauge fixing has no meaning for the relative parameterization.
            "FIX" => {}
            other => return Err(G2oError::Unsupported { line, tag: other.to_string() }),
        }
    }
    Ok(graph)
}

pub fn parse_g2o<R: BufRead>(reader: R) -> Result<PoseGraph, G2oError> {
    replay_reader(reader, |_, _| Ok::<(), BoxError>(()))
}

pub fn load_g2o(path: impl AsRef<FsPath>) -> Result<PoseGraph, G2oError> {
    parse_g2o(BufReader::new(File::open(path)?))
}

/// Loads a file edge by edge, calling `on_edge` right after each insertion.
pub fn replay_g2o<F, E>(path: impl AsRef<FsPath>, on_edge: F) -> Result<PoseGraph, G2oError>
where
    F: FnMut(&PoseGraph, EdgeId) -> Result<(), E>,
    E: Into<BoxError>,
{
    replay_reader(BufReader::new(File::open(path)?), on_edge)
}

/// Writes the graph; file ids are the source ids when they are unique,
/// otherwise the dense vertex indices.
pub fn write_g2o<W: Write>(graph: &PoseGraph, mut out: W) -> std::io::Result<()> {
    let mut seen = std::collections::HashSet::new();
    let use_external = graph.vertices().iter().all(|v| v.external.is_some_and(|x| seen.insert(x)));
    let file_id = |v: VertexId| {
        if use_external {
            graph.vertex(v).external.expect("checked above")
        } else {
            v.0 as u64
        }
    };
    let multi_agent = graph.vertices().iter().any(|v| v.agent != 0);
    let dim = graph.dof().map_or_else(
        || graph.vertices().iter().find_map(|v| v.initial.map(|p| p.dim())).unwrap_or(2),
        |d| if d == 6 { 3 } else { 2 },
    );
    let mut agent = None;
    for (i, v) in graph.vertices().iter().enumerate() {
        if multi_agent && agent != Some(v.agent) {
            writeln!(out, "AGENT {}", v.agent)?;
            agent = Some(v.agent);
        }
        let pose = v.initial.unwrap_or_else(|| Pose::identity(dim));
        let id = file_id(VertexId(i));
        match pose {
            Pose::Se2(p) => writeln!(out, "VERTEX_SE2 {id} {} {} {}", p.x, p.y, p.theta)?,
            Pose::Se3(p) => {
                let q = p.rotation.quaternion();
                let t = p.translation;
                writeln!(out, "VERTEX_SE3:QUAT {id} {} {} {} {} {} {} {}", t.x, t.y, t.z, q.i, q.j, q.k, q.w)?
            }
        }
    }
    for e in graph.edges() {
        let tag = match (e.kind, e.measurement) {
            (EdgeKind::InterAgent, _) => "EDGE_INTER",
            (_, Pose::Se2(_)) => "EDGE_SE2",
            (_, Pose::Se3(_)) => "EDGE_SE3:QUAT",
        };
        write!(out, "{tag} {} {}", file_id(e.from), file_id(e.to))?;
        match e.measurement {
            Pose::Se2(p) => write!(out, " {} {} {}", p.x, p.y, p.theta)?,
            Pose::Se3(p) => {
                let q = p.rotation.quaternion();
                let t = p.translation;
                write!(out, " {} {} {} {} {} {} {}", t.x, t.y, t.z, q.i, q.j, q.k, q.w)?
            }
        }
        for v in e.info.upper_triangle() {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn parse(s: &str) -> Result<PoseGraph, G2oError> {
        parse_g2o(Cursor::new(s))
    }

    #[test]
    fn single_vertex_file() {
        let g = parse("VERTEX_SE2 0 0 0 0\n").unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (1, 0));
    }

    #[test]
    fn identity_information_edge() {
        let g =
            parse("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\n# comment\nEDGE_SE2 0 1 1.0 0.0 0.0 1 0 0 1 0 1\n").unwrap();
        let e = g.edge(EdgeId(0));
        assert_eq!(e.measurement, Pose::se2(1.0, 0.0, 0.0));
        assert_eq!(e.info, Information::identity(3));
        assert_eq!(e.kind, EdgeKind::Odometry);
    }

    #[test]
    fn se3_records_and_information_layout() {
        let mut upper = Vec::new();
        for i in 0..6 {
            for j in i..6 {
                upper.push(if i == j { 10.0 + i as f64 } else { 0.5 });
            }
        }
        let info: Vec<String> = upper.iter().map(|v| v.to_string()).collect();
        let text = format!(
            "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\nVERTEX_SE3:QUAT 5 1 0 0 0 0 0 1\nEDGE_SE3:QUAT 0 5 1 2 3 0 0 0.7071067811865476 0.7071067811865476 {}\n",
            info.join(" ")
        );
        let g = parse(&text).unwrap();
        let e = g.edge(EdgeId(0));
        assert_eq!(e.kind, EdgeKind::LoopClosure);
        let m = e.info.matrix();
        assert_eq!(m[(0, 0)], 10.0);
        assert_eq!(m[(5, 5)], 15.0);
        assert_eq!(m[(4, 1)], 0.5);
        assert!((e.measurement.rotation_angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 x 0\n").unwrap_err();
        assert!(matches!(err, G2oError::Parse { line: 2, .. }), "{err}");
        let err = parse("VERTEX_SE2 0 0 0 0\n\nEDGE_SE2 0 7 1 0 0 1 0 0 1 0 1\n").unwrap_err();
        assert!(matches!(err, G2oError::Parse { line: 3, .. }), "{err}");
        let err = parse("VERTEX_XY 0 0 0\n").unwrap_err();
        assert!(matches!(err, G2oError::Unsupported { line: 1, .. }), "{err}");
        let err = parse("VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 -1 0 1\n").unwrap_err();
        assert!(matches!(err, G2oError::Graph { line: 3, .. }), "{err}");
        let err = parse("VERTEX_SE2 0 0 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0\n").unwrap_err();
        assert!(matches!(err, G2oError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn agent_extension_round_trip() {
        let text = "AGENT 0\nVERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 1 0 0\nAGENT 1\nVERTEX_SE2 10 0 5 0\n\
                    EDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\nEDGE_INTER 1 10 -1 5 0 2 0 0 2 0 2\n";
        let g = parse(text).unwrap();
        assert_eq!(g.vertex(VertexId(2)).agent, 1);
        assert_eq!(g.vertex(VertexId(2)).local, 0);
        assert_eq!(g.edge(EdgeId(1)).kind, EdgeKind::InterAgent);
        let mut buf = Vec::new();
        write_g2o(&g, &mut buf).unwrap();
        let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, g);
        // An ordinary edge across agents is rejected.
        let bad = "AGENT 0\nVERTEX_SE2 0 0 0 0\nAGENT 1\nVERTEX_SE2 1 0 0 0\nEDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\n";
        assert!(matches!(parse(bad), Err(G2oError::Graph { line: 5, .. })));
    }

    #[test]
    fn replay_invokes_callback_per_edge() {
        let text = "VERTEX_SE2 0 0 0 0\nVERTEX_SE2 1 0 0 0\nVERTEX_SE2 2 0 0 0\n\
                    EDGE_SE2 0 1 1 0 0 1 0 0 1 0 1\nEDGE_SE2 1 2 1 0 0 1 0 0 1 0 1\nEDGE_SE2 0 2 2 0 0 1 0 0 1 0 1\n";
        let mut seen = Vec::new();
        let g = replay_reader(Cursor::new(text), |g: &PoseGraph, e| {
            seen.push((e, g.edge_count(), g.cycle_rank()));
            Ok::<(), BoxError>(())
        })
        .unwrap();
        assert_eq!(seen, vec![(EdgeId(0), 1, 0), (EdgeId(1), 2, 0), (EdgeId(2), 3, 1)]);
        assert_eq!(g, parse(text).unwrap());
        let err = replay_reader(Cursor::new(text), |_, e| if e.0 == 1 { Err("stop") } else { Ok(()) }).unwrap_err();
        assert!(matches!(err, G2oError::Callback { line: 5, .. }));
    }
}
