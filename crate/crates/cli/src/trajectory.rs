//! Trajectory files: comma-separated samples under a header row, followed by
//! a `#`-prefixed metadata block. Reals are written with 17 significant
//! digits so a file parses back to the identical samples.

use std::time::Duration;

use cohesion::flow::{FlowStats, Integrator, Sample, Status, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct TrajectoryParseError {
    pub line: usize,
    pub message: String,
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn header(n: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x_{i}")));
    cols.extend(["theta", "phi_norm", "region_hash"].map(String::from));
    cols.join(",")
}

pub fn write(traj: &Trajectory) -> String {
    let n = traj.samples.first().map_or(0, |s| s.x.len());
    let mut out = header(n);
    out.push('\n');
    for s in &traj.samples {
        let mut row = vec![real(s.t)];
        row.extend(s.x.iter().map(|&v| real(v)));
        row.push(real(s.theta));
        row.push(real(s.phi_norm));
        row.push(format!("{:016x}", s.region));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let st = &traj.stats;
    let meta = [
        ("status", traj.status.as_str().to_string()),
        ("integrator", traj.integrator.as_str().to_string()),
        ("tolerance", real(traj.tolerance)),
        ("stop_phi_norm", real(traj.stop_phi_norm)),
        ("steps", st.steps.to_string()),
        ("rejected_steps", st.rejected_steps.to_string()),
        ("region_crossings", st.region_crossings.to_string()),
        ("fallbacks", st.fallbacks.to_string()),
        ("wall_nanos", st.wall.as_nanos().to_string()),
    ];
    for (k, v) in meta {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out
}

pub fn parse(text: &str) -> Result<Trajectory, TrajectoryParseError> {
    let err = |line: usize, message: String| TrajectoryParseError { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, head) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let cols: Vec<&str> = head.split(',').collect();
    if cols.len() < 4 || cols[0] != "t" || cols[cols.len() - 3..] != ["theta", "phi_norm", "region_hash"] {
        return Err(err(1, format!("unexpected header {head:?}")));
    }
    let n = cols.len() - 4;
    if header(n) != head {
        return Err(err(1, format!("unexpected header {head:?}")));
    }
    let mut samples = Vec::new();
    let mut meta = std::collections::HashMap::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let (k, v) = rest.trim().split_once('=').ok_or_else(|| err(no, format!("bad metadata {line:?}")))?;
            meta.insert(k.trim().to_string(), (no, v.trim().to_string()));
            continue;
        }
        if !meta.is_empty() {
            return Err(err(no, "sample row after metadata block".into()));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n + 4 {
            return Err(err(no, format!("expected {} fields, got {}", n + 4, fields.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| err(no, format!("{s:?}: {e}")));
        let region =
            u64::from_str_radix(fields[n + 3].trim(), 16).map_err(|e| err(no, format!("region hash: {e}")))?;
        samples.push(Sample {
            t: num(fields[0])?,
            x: fields[1..=n].iter().map(|f| num(f)).collect::<Result<_, _>>()?,
            theta: num(fields[n + 1])?,
            phi_norm: num(fields[n + 2])?,
            region,
        });
    }
    let last = text.lines().count();
    let get = |k: &str| meta.get(k).cloned().ok_or_else(|| err(last, format!("missing metadata {k}")));
    let count = |k: &str| -> Result<u64, TrajectoryParseError> {
        let (no, v) = get(k)?;
        v.parse().map_err(|e| err(no, format!("{k}: {e}")))
    };
    let float = |k: &str| -> Result<f64, TrajectoryParseError> {
        let (no, v) = get(k)?;
        v.parse().map_err(|e| err(no, format!("{k}: {e}")))
    };
    let (no, status) = get("status")?;
    let status = Status::parse(&status).ok_or_else(|| err(no, format!("unknown status {status:?}")))?;
    let (no, integrator) = get("integrator")?;
    let integrator =
        Integrator::parse(&integrator).ok_or_else(|| err(no, format!("unknown integrator {integrator:?}")))?;
    Ok(Trajectory {
        samples,
        status,
        integrator,
        stats: FlowStats {
            steps: count("steps")? as usize,
            rejected_steps: count("rejected_steps")? as usize,
            region_crossings: count("region_crossings")? as usize,
            fallbacks: count("fallbacks")? as usize,
            wall: Duration::from_nanos(count("wall_nanos")?),
        },
        tolerance: float("tolerance")?,
        stop_phi_norm: float("stop_phi_norm")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cohesion::flow::{integrate_exact, FlowConfig};
    use cohesion::game::gen_symmetric;
    use cohesion::Preimputation;

    #[test]
    fn round_trip_is_bit_exact() {
        let g = gen_symmetric(3, -1.5).unwrap();
        let x0 = Preimputation::new(vec![-4.0, -3.0, 7.0]).unwrap();
        let traj = integrate_exact(&g, &x0, &FlowConfig::default()).unwrap();
        let text = write(&traj);
        let back = parse(&text).unwrap();
        assert_eq!(back.samples.len(), traj.samples.len());
        for (a, b) in back.samples.iter().zip(&traj.samples) {
            assert_eq!(a.t.to_bits(), b.t.to_bits());
            assert!(a.x.iter().zip(&b.x).all(|(p, q)| p.to_bits() == q.to_bits()));
            assert_eq!(a.theta.to_bits(), b.theta.to_bits());
            assert_eq!(a.phi_norm.to_bits(), b.phi_norm.to_bits());
            assert_eq!(a.region, b.region);
        }
        assert_eq!(back.status, traj.status);
        assert_eq!(back.stats, traj.stats);
        assert_eq!(write(&back), text);
    }

    #[test]
    fn malformed_rows_are_located() {
        let text = "t,x_1,x_2,theta,phi_norm,region_hash\n0,1,-1,0,0,00\n0,1\n# status=ReachedCore\n";
        assert_eq!(parse(text).unwrap_err().line, 3);
        assert_eq!(parse("t,x,theta\n").unwrap_err().line, 1);
        let text = "t,x_1,x_2,theta,phi_norm,region_hash\n0,1,-1,0,0,00\n# status=Nope\n";
        assert_eq!(parse(text).unwrap_err().line, 3);
    }
}
