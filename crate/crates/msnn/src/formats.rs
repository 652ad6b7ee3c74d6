//! Plain-text artifacts: the mesh/solution table, network checkpoints,
//! training traces and sampled fields.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! reader here recovers the written values bit for bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use msnn_core::geometry::Slit;
use msnn_core::multiscale::FieldSample;
use msnn_core::training::TrainTrace;
use msnn_core::{CoarseSolution, Mesh, MlpNet, Point};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn perr(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize) -> Result<T, FormatError> {
    tok.parse().map_err(|_| perr(line, format!("bad number {tok:?}")))
}

/// Writes the mesh and nodal values.
///
/// ```text
/// mesh dim=2 counts=8,8 lower=-1,-1 upper=1,1 slit=0,0,1 nodes=88 elements=64
/// 0 -1 -1 0 1
/// ...
/// 0 1 10 9
/// ```
///
/// Node rows are `index x [y] value is_dirichlet`, element rows list node
/// indices in counter-clockwise order.
pub fn write_solution<W: Write>(sol: &CoarseSolution, mut out: W) -> std::io::Result<()> {
    let m = sol.mesh();
    let d = m.domain();
    let dim = m.dim();
    let mut s = String::new();
    let [nx, ny] = m.counts();
    write!(s, "mesh dim={dim} counts={nx}").unwrap();
    if dim == 2 {
        write!(s, ",{ny}").unwrap();
    }
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    write!(s, " lower={} upper={}", join(&d.lower[..dim]), join(&d.upper[..dim])).unwrap();
    if let Some(sl) = m.slit() {
        write!(s, " slit={},{},{}", sl.y, sl.x_start, sl.x_end).unwrap();
    }
    writeln!(s, " nodes={} elements={}", m.num_nodes(), m.num_elements()).unwrap();
    for (i, (x, v)) in m.nodes().iter().zip(sol.coefficients()).enumerate() {
        write!(s, "{i} {}", x[0]).unwrap();
        if dim == 2 {
            write!(s, " {}", x[1]).unwrap();
        }
        writeln!(s, " {v} {}", u8::from(m.is_dirichlet(i))).unwrap();
    }
    for e in 0..m.num_elements() {
        let row: Vec<String> = m.element(e).iter().map(|n| n.to_string()).collect();
        writeln!(s, "{}", row.join(" ")).unwrap();
    }
    out.write_all(s.as_bytes())
}

#[derive(Default)]
struct Header {
    dim: usize,
    counts: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    slit: Option<Slit>,
    nodes: usize,
    elements: usize,
}

fn parse_header(line: &str) -> Result<Header, FormatError> {
    let mut toks = line.split_whitespace();
    if toks.next() != Some("mesh") {
        return Err(perr(1, "expected `mesh` header"));
    }
    let mut h = Header::default();
    let list = |v: &str| v.split(',').map(|t| parse_num::<f64>(t, 1)).collect::<Result<Vec<_>, _>>();
    for tok in toks {
        let (k, v) = tok.split_once('=').ok_or_else(|| perr(1, format!("bad header field {tok:?}")))?;
        match k {
            "dim" => h.dim = parse_num(v, 1)?,
            "counts" => h.counts = v.split(',').map(|t| parse_num(t, 1)).collect::<Result<_, _>>()?,
            "lower" => h.lower = list(v)?,
            "upper" => h.upper = list(v)?,
            "slit" => match list(v)?[..] {
                [y, x_start, x_end] => h.slit = Some(Slit { y, x_start, x_end }),
                _ => return Err(perr(1, "slit needs y,x_start,x_end")),
            },
            "nodes" => h.nodes = parse_num(v, 1)?,
            "elements" => h.elements = parse_num(v, 1)?,
            _ => return Err(perr(1, format!("unknown header field {k:?}"))),
        }
    }
    if !(h.dim == 1 || h.dim == 2) || h.counts.len() != h.dim || h.lower.len() != h.dim || h.upper.len() != h.dim {
        return Err(perr(1, "inconsistent dimension"));
    }
    Ok(h)
}

/// Reads a table written by [`write_solution`].
///
/// Only uniform meshes are representable, so the mesh is rebuilt from the
/// header and every node and element row is checked against it.
pub fn read_solution<R: Read>(input: R) -> Result<CoarseSolution, FormatError> {
    let mut lines = BufReader::new(input).lines();
    let first = lines.next().ok_or_else(|| perr(1, "empty file"))??;
    let h = parse_header(&first)?;
    let mesh = if h.dim == 1 {
        Mesh::uniform_1d(h.lower[0], h.upper[0], h.counts[0])
    } else {
        Mesh::uniform_2d((h.lower[0], h.upper[0]), (h.lower[1], h.upper[1]), h.counts[0], h.counts[1], h.slit)
    }
    .map_err(|e| perr(1, e.to_string()))?;
    if mesh.num_nodes() != h.nodes || mesh.num_elements() != h.elements {
        return Err(perr(1, "node or element count does not match the mesh"));
    }

    let mut values = Vec::with_capacity(h.nodes);
    for i in 0..h.nodes {
        let ln = i + 2;
        let line = lines.next().ok_or_else(|| perr(ln, "missing node row"))??;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != h.dim + 3 {
            return Err(perr(ln, "node row needs index, coordinates, value, flag"));
        }
        let idx: usize = parse_num(toks[0], ln)?;
        let node = mesh.node(i);
        let coords_match = (0..h.dim).map(|a| parse_num::<f64>(toks[1 + a], ln)).collect::<Result<Vec<_>, _>>()?;
        let flag: u8 = parse_num(toks[h.dim + 2], ln)?;
        if idx != i || coords_match.iter().enumerate().any(|(a, &c)| c != node[a]) || (flag == 1) != mesh.is_dirichlet(i) {
            return Err(perr(ln, "node row does not match the mesh"));
        }
        values.push(parse_num(toks[h.dim + 1], ln)?);
    }
    for e in 0..h.elements {
        let ln = h.nodes + e + 2;
        let line = lines.next().ok_or_else(|| perr(ln, "missing element row"))??;
        let ids = line.split_whitespace().map(|t| parse_num::<usize>(t, ln)).collect::<Result<Vec<_>, _>>()?;
        if ids != mesh.element(e) {
            return Err(perr(ln, "element row does not match the mesh"));
        }
    }
    CoarseSolution::new(mesh, values).map_err(|e| perr(1, e.to_string()))
}

/// Network checkpoint: `layers: N0 N1 ... 1`, then per layer the weight
/// matrix (one row per input neuron) and the bias row, blocks separated by
/// blank lines.
pub fn write_net<W: Write>(net: &MlpNet, mut out: W) -> std::io::Result<()> {
    let mut s = String::from("layers:");
    for n in net.layer_sizes() {
        write!(s, " {n}").unwrap();
    }
    s.push('\n');
    let sizes = net.layer_sizes();
    for l in 0..net.num_layers() {
        s.push('\n');
        let n_out = sizes[l + 1];
        for row in net.weights(l).chunks(n_out) {
            s.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
            s.push('\n');
        }
        s.push_str(&net.bias(l).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "));
        s.push('\n');
    }
    out.write_all(s.as_bytes())
}

pub fn read_net<R: Read>(input: R) -> Result<MlpNet, FormatError> {
    let mut text = String::new();
    BufReader::new(input).read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, head) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let sizes = head
        .strip_prefix("layers:")
        .ok_or_else(|| perr(1, "expected `layers:` header"))?
        .split_whitespace()
        .map(|t| parse_num::<usize>(t, 1))
        .collect::<Result<Vec<_>, _>>()?;
    if sizes.len() < 2 || sizes.last() != Some(&1) {
        return Err(perr(1, "layer list must end with a single output"));
    }
    let mut params = Vec::new();
    for l in 0..sizes.len() - 1 {
        let mut rows = 0;
        while rows < sizes[l] + 1 {
            let (ln, line) = lines.next().ok_or_else(|| perr(0, format!("truncated in layer {l}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let row = line.split_whitespace().map(|t| parse_num::<f64>(t, ln)).collect::<Result<Vec<_>, _>>()?;
            if row.len() != sizes[l + 1] {
                return Err(perr(ln, format!("expected {} values", sizes[l + 1])));
            }
            params.extend(row);
            rows += 1;
        }
    }
    if let Some((ln, _)) = lines.find(|(_, l)| !l.trim().is_empty()) {
        return Err(perr(ln, "trailing data"));
    }
    MlpNet::from_params(sizes[0], &sizes[1..sizes.len() - 1], params).map_err(|e| perr(1, e.to_string()))
}

/// `epoch,loss,l2_error`, the last column blank without a probe.
pub fn trace_csv(trace: &TrainTrace) -> String {
    let mut s = String::from("epoch,loss,l2_error\n");
    for r in &trace.records {
        match r.l2_error {
            Some(e) => writeln!(s, "{},{},{}", r.epoch, r.loss, e),
            None => writeln!(s, "{},{},", r.epoch, r.loss),
        }
        .unwrap();
    }
    s
}

/// Exact values and gradient at a point, when the case has them.
pub type ExactSample = Option<(f64, [f64; 2])>;

/// Column names of [`fields_csv`].
pub fn fields_header(dim: usize, with_exact: bool) -> Vec<String> {
    let mut cols: Vec<String> = ["x", "y"][..dim].iter().map(|s| s.to_string()).collect();
    cols.extend(["u_coarse", "u_fine", "u_total"].map(String::from));
    if with_exact {
        cols.push("u_exact".into());
    }
    for axis in ["x", "y"][..dim].iter() {
        let suffix = if dim == 1 { String::new() } else { format!("_{axis}") };
        for part in ["coarse", "fine", "total"] {
            cols.push(format!("du_{part}{suffix}"));
        }
        if with_exact {
            cols.push(format!("du_exact{suffix}"));
        }
    }
    cols
}

/// One row per sample point: coordinates, the three solution components,
/// then per axis the matching derivatives. Exact columns appear when every
/// entry of `exact` is `Some`.
pub fn fields_csv(dim: usize, points: &[Point], samples: &[FieldSample], exact: &[ExactSample]) -> String {
    let with_exact = !exact.is_empty() && exact.iter().all(Option::is_some);
    let mut s = fields_header(dim, with_exact).join(",");
    s.push('\n');
    for (k, (p, f)) in points.iter().zip(samples).enumerate() {
        let mut row: Vec<f64> = p.coords[..dim].to_vec();
        row.extend([f.coarse, f.fine, f.total]);
        let ex = if with_exact { exact[k] } else { None };
        if let Some((u, _)) = ex {
            row.push(u);
        }
        for a in 0..dim {
            row.extend([f.d_coarse[a], f.d_fine[a], f.d_total[a]]);
            if let Some((_, g)) = ex {
                row.push(g[a]);
            }
        }
        s.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use msnn_core::mesh::interpolate_coefficients;
    use msnn_core::training::TraceRecord;

    #[test]
    fn solution_table_round_trips() {
        let m = Mesh::uniform_2d((-1.0, 1.0), (-1.0, 1.0), 4, 4, Some(Slit::unit_right())).unwrap();
        let sol = interpolate_coefficients(&m, |p| (p.x() * 3.1).sin() + p.y() / 7.0);
        let mut buf = Vec::new();
        write_solution(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("mesh dim=2 counts=4,4 lower=-1,-1 upper=1,1 slit=0,0,1 nodes="));
        let back = read_solution(&buf[..]).unwrap();
        assert_eq!(back.mesh().counts(), [4, 4]);
        assert_eq!(back.mesh().slit_pairs(), m.slit_pairs());
        assert!(back.coefficients().iter().zip(sol.coefficients()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn node_rows_follow_the_column_order() {
        let m = Mesh::uniform_1d(0.0, 2.0, 2).unwrap();
        let sol = CoarseSolution::new(m, vec![0.5, -1.0, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_solution(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "mesh dim=1 counts=2 lower=0 upper=2 nodes=3 elements=2");
        assert_eq!(&lines[1..], ["0 0 0.5 1", "1 1 -1 0", "2 2 2 1", "0 1", "1 2"]);
    }

    #[test]
    fn corrupted_tables_are_rejected() {
        let m = Mesh::uniform_1d(0.0, 1.0, 2).unwrap();
        let sol = CoarseSolution::new(m, vec![0.0; 3]).unwrap();
        let mut buf = Vec::new();
        write_solution(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        for bad in [text.replace("1 0.5 0 0", "1 0.6 0 0"), text.replace("nodes=3", "nodes=4"), text.replace("0 1\n", "1 0\n")] {
            assert!(read_solution(bad.as_bytes()).is_err(), "{bad}");
        }
    }

    #[test]
    fn checkpoint_layout() {
        let mut net = MlpNet::zeros(1, &[2]).unwrap();
        net.params_mut().copy_from_slice(&[1.0, 2.0, 0.5, -0.5, 3.0, 4.0, 0.25]);
        let mut buf = Vec::new();
        write_net(&net, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "layers: 1 2 1\n\n1 2\n0.5 -0.5\n\n3\n4\n0.25\n");
        assert_eq!(read_net(&buf[..]).unwrap(), net);
    }

    #[test]
    fn bad_checkpoints_are_rejected() {
        for bad in ["", "layers: 1 2\n", "layers: 1 1\n\n1\n", "layers: 1 1\n\n1\n2\n3\n", "layers: 1 1\n\n1 2\n0\n"] {
            assert!(read_net(bad.as_bytes()).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn trace_leaves_missing_errors_blank() {
        let t = TrainTrace {
            records: vec![
                TraceRecord { epoch: 0, loss: 1.5, l2_error: None },
                TraceRecord { epoch: 10, loss: 0.25, l2_error: Some(0.125) },
            ],
        };
        assert_eq!(trace_csv(&t), "epoch,loss,l2_error\n0,1.5,\n10,0.25,0.125\n");
    }

    #[test]
    fn field_columns() {
        assert_eq!(fields_header(1, true).join(","), "x,u_coarse,u_fine,u_total,u_exact,du_coarse,du_fine,du_total,du_exact");
        assert_eq!(
            fields_header(2, false).join(","),
            "x,y,u_coarse,u_fine,u_total,du_coarse_x,du_fine_x,du_total_x,du_coarse_y,du_fine_y,du_total_y"
        );
    }
}
