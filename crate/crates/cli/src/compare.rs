use std::fmt::Write as _;
use std::path::Path;

use ifenn::fem::{error_metrics, read_nodal_csv, ErrorReport, NodalTable};
use ifenn::ifenn::RunManifest;
use ifenn::{Error, Result};

const FIELDS: [&str; 3] = ["theta", "u_x", "u_y"];

pub fn field_errors(a: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<ErrorReport> {
    error_metrics(a, reference)
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn check_grids(name: &str, a: &NodalTable, b: &NodalTable) -> Result<()> {
    if a.times.len() != b.times.len() {
        return Err(Error::ShapeMismatch(format!(
            "{name}: {} increments vs {}",
            a.times.len(),
            b.times.len()
        )));
    }
    if let Some(i) = (0..a.times.len()).find(|&i| !same_time(a.times[i], b.times[i])) {
        return Err(Error::ShapeMismatch(format!(
            "{name}: time grids differ at increment {i} ({:e} vs {:e})",
            a.times[i], b.times[i]
        )));
    }
    for (s, (ra, rb)) in a.values.iter().zip(&b.values).enumerate() {
        if ra.len() != rb.len() {
            return Err(Error::ShapeMismatch(format!(
                "{name}: {} nodes vs {} at increment {s}",
                ra.len(),
                rb.len()
            )));
        }
    }
    Ok(())
}

/// One row per field with the maxima, their locations and the aggregate.
pub fn write_summary(fields: &[(&str, ErrorReport)], path: &Path) -> Result<()> {
    let mut s = String::from(
        "field,max_abs,max_abs_step,max_abs_node,max_rel_percent,max_rel_step,max_rel_node,\
         final_max_abs,final_max_rel_percent,aggregate\n",
    );
    for (name, r) in fields {
        let last = r.abs.len() - 1;
        let _ = write!(s, "{name}");
        for m in [r.max_abs(), r.max_rel()] {
            match m {
                Some(m) => {
                    let _ = write!(s, ",{:e},{},{}", m.value, m.step, m.node);
                }
                None => s.push_str(",,,"),
            }
        }
        let _ = writeln!(
            s,
            ",{:e},{:e},{:e}",
            r.max_abs_at(last),
            r.max_rel_at(last),
            r.aggregate
        );
    }
    std::fs::write(path, s).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_pointwise(r: &ErrorReport, times: &[f64], path: &Path) -> Result<()> {
    let mut s = String::from("step,time,node_id,abs,rel_percent\n");
    for (step, (abs, rel)) in r.abs.iter().zip(&r.rel).enumerate() {
        for (n, (a, e)) in abs.iter().zip(rel).enumerate() {
            let _ = write!(s, "{step},{:e},{n},{a:e},", times[step]);
            if let Some(e) = e {
                let _ = write!(s, "{e:e}");
            }
            s.push('\n');
        }
    }
    std::fs::write(path, s).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Errors of the fields in `run_a` against those in `run_b`.
pub fn run(run_a: &Path, run_b: &Path, out: &Path) -> Result<()> {
    let mut fields = Vec::new();
    let mut times = Vec::new();
    for name in FIELDS {
        let file = format!("{name}.csv");
        let (pa, pb) = (run_a.join(&file), run_b.join(&file));
        match (pa.exists(), pb.exists()) {
            (false, false) => continue,
            (true, true) => {}
            _ => {
                return Err(Error::ShapeMismatch(format!(
                    "{file} is present in only one of the two runs"
                )))
            }
        }
        let a = read_nodal_csv(&pa)?;
        let b = read_nodal_csv(&pb)?;
        check_grids(name, &a, &b)?;
        times = b.times.clone();
        fields.push((name, error_metrics(&a.values, &b.values)?));
    }
    if fields.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no field CSVs found in {} and {}",
            run_a.display(),
            run_b.display()
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    for (name, r) in &fields {
        write_pointwise(r, &times, &out.join(format!("{name}_errors.csv")))?;
    }
    write_summary(&fields, &out.join("summary.csv"))?;

    let inputs = serde_json::json!({
        "run_a": run_a.display().to_string(),
        "run_b": run_b.display().to_string(),
    });
    let mut manifest = RunManifest::new("compare", inputs);
    for (name, r) in &fields {
        let last = r.abs.len() - 1;
        manifest.errors.extend([
            (format!("{name}.max_abs"), r.max_abs().map_or(0.0, |m| m.value)),
            (format!("{name}.max_rel_percent"), r.max_rel().map_or(0.0, |m| m.value)),
            (format!("{name}.final_max_rel_percent"), r.max_rel_at(last)),
            (format!("{name}.aggregate"), r.aggregate),
        ]);
        log::info!(
            "{name}: max abs {:e}, final-step max rel {:.4}%, aggregate {:e}",
            r.max_abs().map_or(0.0, |m| m.value),
            r.max_rel_at(last),
            r.aggregate
        );
    }
    manifest.write(&out.join("manifest.json"))
}
