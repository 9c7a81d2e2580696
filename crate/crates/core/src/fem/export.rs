use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{quadrature_points, Mesh, QuadratureRule};

use super::SolutionHistory;

fn coords(out: &mut String, dim: usize, x: [f64; 2]) {
    let _ = write!(out, "{:e}", x[0]);
    if dim == 2 {
        let _ = write!(out, ",{:e}", x[1]);
    }
}

fn nodal_csv(mesh: &Mesh, times: &[f64], field: &[Vec<f64>]) -> String {
    let dim = mesh.dim();
    let mut s = String::from(if dim == 2 { "step,time,node_id,x,y,value\n" } else { "step,time,node_id,x,value\n" });
    for (step, row) in field.iter().enumerate() {
        for (n, v) in row.iter().enumerate() {
            let _ = write!(s, "{step},{:e},{n},", times[step]);
            coords(&mut s, dim, mesh.node(n));
            let _ = writeln!(s, ",{v:e}");
        }
    }
    s
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `theta.csv`, `u_x.csv` (and `u_y.csv` in 2D) and
/// `tr_eps_dot.csv` into `dir`.
pub fn write_history_csv(history: &SolutionHistory, mesh: &Mesh, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(&dir.join("theta.csv"), &nodal_csv(mesh, &history.times, &history.theta))?;
    let names = ["u_x.csv", "u_y.csv"];
    for (c, name) in names.iter().enumerate().take(history.dim) {
        write(&dir.join(name), &nodal_csv(mesh, &history.times, &history.displacement_field(c)))?;
    }

    let quad = quadrature_points(mesh, &QuadratureRule::default_for(mesh.dim()))?;
    let dim = mesh.dim();
    let mut s = String::from(if dim == 2 {
        "step,time,elem_id,qp_id,x,y,tr_eps_dot\n"
    } else {
        "step,time,elem_id,qp_id,x,tr_eps_dot\n"
    });
    for (step, row) in history.tr_strain_rate.iter().enumerate() {
        for (q, v) in quad.iter().zip(row) {
            let _ = write!(s, "{step},{:e},{},{},", history.times[step], q.element, q.local);
            coords(&mut s, dim, q.x);
            let _ = writeln!(s, ",{v:e}");
        }
    }
    write(&dir.join("tr_eps_dot.csv"), &s)
}

/// Per-increment wall-clock CSV `step,time,seconds`.
pub fn write_timing_csv(history: &SolutionHistory, path: &Path) -> Result<()> {
    let mut s = String::from("step,time,seconds\n");
    for (i, (t, sec)) in history.times.iter().zip(&history.step_seconds).enumerate() {
        let _ = writeln!(s, "{i},{t:e},{sec:e}");
    }
    write(path, &s)
}

/// Nodal field read back from a CSV written by [`write_history_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct NodalTable {
    pub times: Vec<f64>,
    /// `values[step][node]`.
    pub values: Vec<Vec<f64>>,
}

pub fn read_nodal_csv(path: &Path) -> Result<NodalTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: &str| Error::MeshParse {
        path: path.to_path_buf(),
        line,
        message: msg.to_string(),
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5 || cols[..3] != ["step", "time", "node_id"] {
        return Err(bad(1, "not a nodal field table"));
    }
    let mut table = NodalTable {
        times: Vec::new(),
        values: Vec::new(),
    };
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(bad(i + 1, "wrong number of columns"));
        }
        let step: usize = f[0].parse().map_err(|_| bad(i + 1, "bad step"))?;
        let time: f64 = f[1].parse().map_err(|_| bad(i + 1, "bad time"))?;
        let node: usize = f[2].parse().map_err(|_| bad(i + 1, "bad node id"))?;
        let v: f64 = f[f.len() - 1].parse().map_err(|_| bad(i + 1, "bad value"))?;
        if step == table.values.len() {
            table.times.push(time);
            table.values.push(Vec::new());
        }
        if step + 1 != table.values.len() || node != table.values[step].len() {
            return Err(bad(i + 1, "rows out of order"));
        }
        table.values[step].push(v);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_interval_mesh;

    #[test]
    fn csv_layout() {
        let m = build_interval_mesh(1, 1.0).unwrap();
        let h = SolutionHistory {
            dim: 1,
            times: vec![0.5],
            theta: vec![vec![1.0, 2.0]],
            displacement: vec![vec![0.0, 0.0]],
            tr_strain_rate: vec![vec![0.0, 0.0]],
            step_seconds: vec![0.1],
            n_unknowns: 4,
        };
        let dir = tempfile::tempdir().unwrap();
        write_history_csv(&h, &m, dir.path()).unwrap();
        let theta = std::fs::read_to_string(dir.path().join("theta.csv")).unwrap();
        let lines: Vec<&str> = theta.lines().collect();
        assert_eq!(lines[0], "step,time,node_id,x,value");
        assert_eq!(lines[2], "0,5e-1,1,1e0,2e0");
        let q = std::fs::read_to_string(dir.path().join("tr_eps_dot.csv")).unwrap();
        assert!(q.starts_with("step,time,elem_id,qp_id,x,tr_eps_dot\n0,5e-1,0,0,"));
        assert!(!dir.path().join("u_y.csv").exists());
        let back = read_nodal_csv(&dir.path().join("theta.csv")).unwrap();
        assert_eq!(back.times, h.times);
        assert_eq!(back.values, h.theta);
        assert!(read_nodal_csv(&dir.path().join("tr_eps_dot.csv")).is_err());
    }
}
