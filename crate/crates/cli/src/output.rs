//! Serialized forms: raw image dump, JSON documents and CSV tables.

use std::fmt::Write as _;

use serde::Serialize;
use varfast::metrics::{BenchTable, PhaseRow};
use varfast::TokenMap;

/// `"h w c\n"` in ASCII, then every entry as a little-endian `f64` in
/// (row, column, channel) order.
pub fn image_bytes(image: &TokenMap) -> Vec<u8> {
    let (h, w, c) = image.shape();
    let mut out = format!("{h} {w} {c}\n").into_bytes();
    out.reserve(image.data().len() * 8);
    for v in image.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    serde_json::to_string_pretty(value)
}

#[derive(Debug, Serialize)]
pub struct CompareReport {
    pub inf_norm_diff: f64,
    pub composed_bound: f64,
    pub pass: bool,
}

pub fn bench_csv(table: &BenchTable) -> String {
    let mut s = String::from("K,n,L_K,mode,stage,mults,adds,exps,wall_ms\n");
    for r in &table.rows {
        let c = r.counts;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{:.3}",
            r.num_scales, r.n, r.tokens, r.mode, r.stage, c.mults, c.adds, c.exps, r.wall_ms
        );
    }
    for sl in &table.slopes {
        let _ = writeln!(s, "slope,{},{},{}", sl.stage, sl.mode, sl.report.fitted_slope);
    }
    s
}

pub fn phase_csv(rows: &[PhaseRow]) -> String {
    let mut s = String::from("c,R,b,g,status,err\n");
    for r in rows {
        let g = r.degree.map(|g| g.to_string()).unwrap_or_default();
        let err = r.err.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{}", r.c, r.r, r.b, g, r.status(), err);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_header_and_payload() {
        let img = TokenMap::new(1, 2, 1, vec![1.5, -2.0]).unwrap();
        let bytes = image_bytes(&img);
        assert!(bytes.starts_with(b"1 2 1\n"));
        assert_eq!(bytes.len(), 6 + 16);
        assert_eq!(f64::from_le_bytes(bytes[6..14].try_into().unwrap()), 1.5);
        assert_eq!(f64::from_le_bytes(bytes[14..22].try_into().unwrap()), -2.0);
    }

    #[test]
    fn phase_rows_leave_fail_cells_empty() {
        let rows = [
            PhaseRow { c: 0.1, r: 0.2, b: 0.3, degree: Some(2), err: Some(1e-9), delta_prime: Some(1e-3) },
            PhaseRow { c: 9.0, r: 9.0, b: 9.0, degree: None, err: None, delta_prime: None },
        ];
        let csv = phase_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "0.1,0.2,0.3,2,ok,0.000000001");
        assert_eq!(lines[2], "9,9,9,,FAIL,");
    }
}
