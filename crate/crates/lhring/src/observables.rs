//! Transport and momentum diagnostics, ensemble statistics and the results CSV.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::MomentumGrid;

/// First line of every observables CSV.
pub const CSV_SCHEMA: &str = "# lhring-observables v1";

pub fn site_populations(a: &[Complex64]) -> Vec<f64> {
    a.iter().map(|x| x.norm_sqr()).collect()
}

pub fn site_populations_density(rho: &Array2<Complex64>) -> Vec<f64> {
    rho.diag().iter().map(|x| x.re).collect()
}

/// `1 - sum(pops)`
pub fn transmission(pops: &[f64]) -> f64 {
    1.0 - pops.iter().sum::<f64>()
}

/// `|A_q|^2` over the antenna block of `a`.
pub fn momentum_populations(a: &[Complex64], grid: &MomentumGrid) -> Vec<f64> {
    let m = grid.m;
    let norm = 1.0 / m as f64;
    (0..m)
        .map(|k| {
            let s: Complex64 = a[..m].iter().enumerate().map(|(j, x)| grid.phase(k, j) * x).sum();
            s.norm_sqr() * norm
        })
        .collect()
}

/// `M^{-1} sum_{jk} e^{-i q (r_j - r_k)} rho_jk` over the antenna block.
pub fn momentum_populations_density(rho: &Array2<Complex64>, grid: &MomentumGrid) -> Vec<f64> {
    let m = grid.m;
    let norm = 1.0 / m as f64;
    (0..m)
        .map(|k| {
            let mut acc = Complex64::default();
            for j in 0..m {
                let pj = grid.phase(k, j);
                for l in 0..m {
                    acc += pj * grid.phase(k, l).conj() * rho[[j, l]];
                }
            }
            acc.re * norm
        })
        .collect()
}

/// Per-time observable layout: `[P_T, P_q0, P_NS, pop_1..pop_n, P_q1..P_qM]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
}

impl Layout {
    pub fn width(&self) -> usize {
        3 + self.n + self.m
    }

    /// Fills one row from site and momentum populations.
    pub fn fill(&self, pops: &[f64], pq: &[f64], q0: usize, row: &mut [f64]) {
        let antenna: f64 = pops[..self.m].iter().sum();
        row[0] = transmission(pops);
        row[1] = pq[q0];
        row[2] = antenna - pq[q0];
        row[3..3 + self.n].copy_from_slice(pops);
        row[3 + self.n..].copy_from_slice(pq);
    }
}

/// Running mean and centred second moment, merged pairwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Moments {
    pub fn single(x: Vec<f64>) -> Self {
        let len = x.len();
        Self { count: 1, mean: x, m2: vec![0.0; len] }
    }

    /// `count` identical samples.
    pub fn repeated(x: Vec<f64>, count: u64) -> Self {
        let len = x.len();
        Self { count, mean: x, m2: vec![0.0; len] }
    }

    pub fn merge(a: Self, b: Self) -> Self {
        let n = a.count + b.count;
        let (na, nb, nf) = (a.count as f64, b.count as f64, n as f64);
        let mut mean = a.mean;
        let mut m2 = a.m2;
        for i in 0..mean.len() {
            let d = b.mean[i] - mean[i];
            mean[i] += d * nb / nf;
            m2[i] += b.m2[i] + d * d * na * nb / nf;
        }
        Self { count: n, mean, m2 }
    }

    /// Standard error of the mean (zero for a single sample).
    pub fn stderr(&self, i: usize) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        (self.m2[i].max(0.0) / (n - 1.0) / n).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub t: Vec<f64>,
    pub p_t: Vec<f64>,
    pub p_t_se: Vec<f64>,
    pub p_q0: Vec<f64>,
    pub p_q0_se: Vec<f64>,
    pub p_ns: Vec<f64>,
    pub p_ns_se: Vec<f64>,
    /// `pops[time][site]`
    pub pops: Vec<Vec<f64>>,
    /// `p_q[time][k]`
    pub p_q: Vec<Vec<f64>>,
}

impl ObservableSeries {
    pub fn from_moments(t: Vec<f64>, layout: Layout, mom: &Moments) -> Self {
        let w = layout.width();
        let mut s = Self::empty(t.len());
        s.t = t;
        for k in 0..s.t.len() {
            let b = k * w;
            s.p_t.push(mom.mean[b]);
            s.p_t_se.push(mom.stderr(b));
            s.p_q0.push(mom.mean[b + 1]);
            s.p_q0_se.push(mom.stderr(b + 1));
            s.p_ns.push(mom.mean[b + 2]);
            s.p_ns_se.push(mom.stderr(b + 2));
            s.pops.push(mom.mean[b + 3..b + 3 + layout.n].to_vec());
            s.p_q.push(mom.mean[b + 3 + layout.n..b + w].to_vec());
        }
        s
    }

    /// Noise-free series (density matrix or a single deterministic trajectory).
    pub fn from_rows(t: Vec<f64>, layout: Layout, rows: &[f64]) -> Self {
        Self::from_moments(t, layout, &Moments::single(rows.to_vec()))
    }

    fn empty(len: usize) -> Self {
        let v = || Vec::with_capacity(len);
        Self {
            t: v(),
            p_t: v(),
            p_t_se: v(),
            p_q0: v(),
            p_q0_se: v(),
            p_ns: v(),
            p_ns_se: v(),
            pops: Vec::with_capacity(len),
            p_q: Vec::with_capacity(len),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Index of the output time closest to `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        self.t.iter().enumerate().min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs())).map(|(i, _)| i)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W, full: bool) -> std::io::Result<()> {
        writeln!(w, "{CSV_SCHEMA}")?;
        let mut header = String::from("t,P_T,P_T_stderr,P_q0,P_q0_stderr,P_NS,P_NS_stderr");
        if full {
            let n = self.pops.first().map_or(0, Vec::len);
            let m = self.p_q.first().map_or(0, Vec::len);
            for j in 1..=n {
                header += &format!(",pop_{j}");
            }
            for k in 1..=m {
                header += &format!(",P_q{k}");
            }
        }
        writeln!(w, "{header}")?;
        for k in 0..self.len() {
            let mut line = format!(
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                self.t[k], self.p_t[k], self.p_t_se[k], self.p_q0[k], self.p_q0_se[k], self.p_ns[k], self.p_ns_se[k]
            );
            if full {
                for x in self.pops[k].iter().chain(&self.p_q[k]) {
                    line += &format!(",{x:e}");
                }
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, full: bool) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, full).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }

    /// Reads the leading seven columns back; rejects other schema versions.
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(l) if l.trim() == CSV_SCHEMA => {}
            Some(l) => return Err(Error::validation(format!("unsupported CSV schema line {l:?}"))),
            None => return Err(Error::validation("empty CSV")),
        }
        let header = lines.next().ok_or_else(|| Error::validation("CSV has no header"))?;
        if !header.starts_with("t,P_T,P_T_stderr,P_q0,P_q0_stderr,P_NS,P_NS_stderr") {
            return Err(Error::validation(format!("unexpected CSV header {header:?}")));
        }
        let mut s = Self::empty(0);
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .take(7)
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::validation(format!("CSV line {}: {e}", i + 3)))?;
            if v.len() < 7 {
                return Err(Error::validation(format!("CSV line {} has {} columns", i + 3, v.len())));
            }
            s.t.push(v[0]);
            s.p_t.push(v[1]);
            s.p_t_se.push(v[2]);
            s.p_q0.push(v[3]);
            s.p_q0_se.push(v[4]);
            s.p_ns.push(v[5]);
            s.p_ns_se.push(v[6]);
        }
        if s.is_empty() {
            return Err(Error::validation("CSV has no data rows"));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn population_examples() {
        assert_eq!(site_populations(&[c(1.0), c(0.0)]), vec![1.0, 0.0]);
        let g = MomentumGrid::new(4, 0.2);
        let sym = vec![c(0.5); 4];
        assert!(site_populations(&sym).iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let pq = momentum_populations(&sym, &g);
        assert!((pq[g.q0_index()] - 1.0).abs() < 1e-12);
        let rho = Array2::from_diag(&ndarray::arr1(&[c(0.2); 5]));
        assert!(site_populations_density(&rho).iter().all(|&p| (p - 0.2).abs() < 1e-15));
        assert_eq!(transmission(&[1.0, 0.0]), 0.0);
        assert_eq!(transmission(&[0.0, 0.0]), 1.0);
    }

    #[test]
    fn mixed_antenna_block_is_flat_in_momentum() {
        let g = MomentumGrid::new(6, 0.2);
        let rho = Array2::from_diag(&ndarray::arr1(&[c(1.0 / 6.0); 6]));
        for p in momentum_populations_density(&rho, &g) {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
    }

    #[test]
    fn moments_merge_matches_two_pass() {
        let xs = [0.3, 0.1, 0.7, 0.25, 0.9];
        let m = xs.iter().map(|&x| Moments::single(vec![x])).reduce(Moments::merge).unwrap();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((m.mean[0] - mean).abs() < 1e-15);
        assert!((m.stderr(0) - (var / 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_and_schema_check() {
        let layout = Layout { n: 2, m: 1 };
        let rows = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.5, 0.4, 0.5, 0.1, 0.4, 0.5];
        let s = ObservableSeries::from_rows(vec![0.0, 1.0], layout, &rows);
        let text = s.to_csv_string(true);
        assert!(text.lines().nth(1).unwrap().ends_with("pop_1,pop_2,P_q1"));
        let back = ObservableSeries::read_csv(&text).unwrap();
        assert_eq!(back.p_t, s.p_t);
        assert!(ObservableSeries::read_csv(&text.replace("v1", "v9")).is_err());
        assert!(ObservableSeries::read_csv("").is_err());
    }
}
