use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::geometry::{Sim3, Sim3Tangent, Vector7};

pub type Matrix7 = SMatrix<f64, 7, 7>;

/// Perturbation used for numeric residual Jacobians.
pub const JACOBIAN_STEP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Sequential,
    InterSubmap,
    Loop,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Sequential => "sequential",
            EdgeKind::InterSubmap => "inter_submap",
            EdgeKind::Loop => "loop",
        }
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EdgeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(EdgeKind::Sequential),
            "inter_submap" => Ok(EdgeKind::InterSubmap),
            "loop" => Ok(EdgeKind::Loop),
            other => Err(Error::parse("edge kind", format!("unknown kind {other:?}"))),
        }
    }
}

/// Relative Sim(3) measurement between two nodes.
///
/// The edge is satisfied when `T_from^-1 * T_to == measurement`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sim3Constraint {
    pub from: usize,
    pub to: usize,
    pub measurement: Sim3,
    /// Scalar information weight.
    pub information: f64,
    pub kind: EdgeKind,
}

impl Sim3Constraint {
    /// `EDGE_SIM3 from to s tx ty tz qx qy qz qw omega`.
    pub fn to_line(&self) -> String {
        format!(
            "EDGE_SIM3 {} {} {} {}",
            self.from,
            self.to,
            self.measurement.to_text(),
            self.information
        )
    }
}

/// `log(H^-1 * T_from^-1 * T_to)`.
pub fn residual(edge: &Sim3Constraint, from: &Sim3, to: &Sim3) -> Result<Sim3Tangent> {
    edge.measurement
        .inverse()
        .compose(&from.inverse().compose(to))
        .log()
}

/// Central-difference Jacobians of the residual with respect to right
/// perturbations `T * exp(delta)` of both endpoints.
pub fn edge_jacobians(edge: &Sim3Constraint, from: &Sim3, to: &Sim3) -> Result<(Matrix7, Matrix7)> {
    let mut j_from = Matrix7::zeros();
    let mut j_to = Matrix7::zeros();
    for k in 0..7 {
        let mut d = Vector7::zeros();
        d[k] = JACOBIAN_STEP;
        let plus = Sim3Tangent(d);
        let minus = Sim3Tangent(-d);
        let a = residual(edge, &from.retract(&plus), to)?;
        let b = residual(edge, &from.retract(&minus), to)?;
        j_from.set_column(k, &((a.0 - b.0) / (2.0 * JACOBIAN_STEP)));
        let a = residual(edge, from, &to.retract(&plus))?;
        let b = residual(edge, from, &to.retract(&minus))?;
        j_to.set_column(k, &((a.0 - b.0) / (2.0 * JACOBIAN_STEP)));
    }
    Ok((j_from, j_to))
}

/// Keyframe Sim(3) nodes and relative constraints.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PoseGraph {
    pub nodes: BTreeMap<usize, Sim3>,
    pub edges: Vec<Sim3Constraint>,
    pub fixed: BTreeSet<usize>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: usize, pose: Sim3) {
        self.nodes.insert(id, pose);
    }

    pub fn fix(&mut self, id: usize) -> Result<()> {
        if !self.nodes.contains_key(&id) {
            return Err(Error::UnknownNode(id));
        }
        self.fixed.insert(id);
        Ok(())
    }

    pub fn add_edge(&mut self, edge: Sim3Constraint) -> Result<()> {
        for id in [edge.from, edge.to] {
            if !self.nodes.contains_key(&id) {
                return Err(Error::UnknownNode(id));
            }
        }
        if !(edge.information > 0.0 && edge.information.is_finite()) {
            return Err(Error::Config(format!(
                "edge {}->{} information must be positive, got {}",
                edge.from, edge.to, edge.information
            )));
        }
        self.edges.push(edge);
        Ok(())
    }

    pub fn node(&self, id: usize) -> Result<&Sim3> {
        self.nodes.get(&id).ok_or(Error::UnknownNode(id))
    }

    pub fn edge_residual(&self, edge: &Sim3Constraint) -> Result<Sim3Tangent> {
        residual(edge, self.node(edge.from)?, self.node(edge.to)?)
    }

    /// Sum of `omega * |r|^2` without any robust kernel.
    pub fn chi2(&self) -> Result<f64> {
        let mut total = 0.0;
        for e in &self.edges {
            total += e.information * self.edge_residual(e)?.0.norm_squared();
        }
        Ok(total)
    }

    /// Connected components of the free nodes that contain no fixed node.
    pub fn unanchored_components(&self) -> Vec<Vec<usize>> {
        let mut adjacency: BTreeMap<usize, Vec<usize>> = self.nodes.keys().map(|k| (*k, Vec::new())).collect();
        for e in &self.edges {
            adjacency.entry(e.from).or_default().push(e.to);
            adjacency.entry(e.to).or_default().push(e.from);
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for &start in self.nodes.keys() {
            if !seen.insert(start) {
                continue;
            }
            let mut component = vec![start];
            let mut stack = vec![start];
            while let Some(n) = stack.pop() {
                for &m in &adjacency[&n] {
                    if seen.insert(m) {
                        component.push(m);
                        stack.push(m);
                    }
                }
            }
            if !component.iter().any(|n| self.fixed.contains(n)) {
                component.sort_unstable();
                out.push(component);
            }
        }
        out
    }

    /// `VERTEX_SIM3`, `FIX` and `EDGE_SIM3` lines.
    ///
    /// Edge lines carry the edge kind as a trailing token.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (id, pose) in &self.nodes {
            out.push_str(&format!("VERTEX_SIM3 {id} {}\n", pose.to_text()));
        }
        for id in &self.fixed {
            out.push_str(&format!("FIX {id}\n"));
        }
        for e in &self.edges {
            out.push_str(&format!("{} {}\n", e.to_line(), e.kind));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut graph = PoseGraph::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = || format!("graph line {}", lineno + 1);
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let parse_id = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(ctx(), e.to_string()));
            let parse_f = |s: &&str| s.parse::<f64>().map_err(|e| Error::parse(ctx(), e.to_string()));
            match tokens[0] {
                "VERTEX_SIM3" => {
                    if tokens.len() != 10 {
                        return Err(Error::parse(ctx(), "VERTEX_SIM3 needs 9 fields"));
                    }
                    let fields: Vec<f64> = tokens[2..].iter().map(parse_f).collect::<Result<_>>()?;
                    graph.add_node(parse_id(tokens[1])?, Sim3::from_fields(&fields)?);
                }
                "FIX" => {
                    if tokens.len() != 2 {
                        return Err(Error::parse(ctx(), "FIX needs 1 field"));
                    }
                    graph.fixed.insert(parse_id(tokens[1])?);
                }
                "EDGE_SIM3" => {
                    if tokens.len() != 12 && tokens.len() != 13 {
                        return Err(Error::parse(ctx(), "EDGE_SIM3 needs 11 or 12 fields"));
                    }
                    let fields: Vec<f64> = tokens[3..11].iter().map(parse_f).collect::<Result<_>>()?;
                    let kind = match tokens.get(12) {
                        Some(k) => k.parse()?,
                        None => EdgeKind::Loop,
                    };
                    edges.push(Sim3Constraint {
                        from: parse_id(tokens[1])?,
                        to: parse_id(tokens[2])?,
                        measurement: Sim3::from_fields(&fields)?,
                        information: parse_f(&tokens[11])?,
                        kind,
                    });
                }
                other => return Err(Error::parse(ctx(), format!("unknown record {other:?}"))),
            }
        }
        for id in graph.fixed.clone() {
            graph.fix(id)?;
        }
        for e in edges {
            graph.add_edge(e)?;
        }
        Ok(graph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn edge(from: usize, to: usize, m: Sim3) -> Sim3Constraint {
        Sim3Constraint {
            from,
            to,
            measurement: m,
            information: 1.0,
            kind: EdgeKind::Sequential,
        }
    }

    #[test]
    fn pure_scale_residual() {
        let e = edge(0, 1, Sim3::identity());
        let r = residual(&e, &Sim3::identity(), &Sim3::from_scale(2.0)).unwrap();
        let expected = Vector7::from_column_slice(&[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2f64.ln()]);
        assert!((r.0 - expected).norm() < 1e-15);
    }

    #[test]
    fn satisfied_edge_has_zero_residual() {
        let a = Sim3::new(1.5, crate::geometry::quat(0.9, 0.1, 0.3, -0.2), Vec3::new(1.0, 2.0, 3.0));
        let b = Sim3::new(0.7, crate::geometry::quat(0.2, 0.9, 0.1, 0.4), Vec3::new(-1.0, 0.5, 0.0));
        let e = edge(0, 1, a.inverse().compose(&b));
        assert!(residual(&e, &a, &b).unwrap().norm() < 1e-12);
    }

    #[test]
    fn text_roundtrip() {
        let mut g = PoseGraph::new();
        g.add_node(0, Sim3::identity());
        g.add_node(3, Sim3::new(1.25, crate::geometry::quat(0.5, 0.5, 0.5, 0.5), Vec3::new(0.1, 0.2, 0.3)));
        g.fix(0).unwrap();
        let mut e = edge(0, 3, Sim3::from_scale(0.5));
        e.kind = EdgeKind::Loop;
        e.information = 0.5;
        g.add_edge(e).unwrap();
        let back = PoseGraph::from_text(&g.to_text()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn rejects_unknown_nodes() {
        let mut g = PoseGraph::new();
        g.add_node(0, Sim3::identity());
        assert!(matches!(g.add_edge(edge(0, 1, Sim3::identity())), Err(Error::UnknownNode(1))));
        assert!(PoseGraph::from_text("VERTEX_SIM3 0 1 0 0 0 0 0 0 1\nEDGE_SIM3 0 4 1 0 0 0 0 0 0 1 1").is_err());
    }

    #[test]
    fn components_without_anchor() {
        let mut g = PoseGraph::new();
        for i in 0..4 {
            g.add_node(i, Sim3::identity());
        }
        g.fix(0).unwrap();
        g.add_edge(edge(0, 1, Sim3::identity())).unwrap();
        g.add_edge(edge(2, 3, Sim3::identity())).unwrap();
        assert_eq!(g.unanchored_components(), vec![vec![2, 3]]);
    }
}
