//! CSV report rendering and the analytic FLOPs report.

use super::eval::{AdvRow, EvalReport};
use crate::diffnet::{count_flops, ModelConfig, N_PATCHES};
use crate::siggen::JammingType;

/// Accepted single-pass cost window, FLOPs.
pub const FLOPS_BAND: (u64, u64) = (1_000_000, 2_600_000);

pub fn summary_csv(r: &EvalReport) -> String {
    let mut s = String::from("metric,value\n");
    s.push_str(&format!("n,{}\n", r.n));
    s.push_str(&format!("correct,{}\n", r.correct));
    s.push_str(&format!("accuracy,{:.6}\n", r.accuracy));
    s
}

pub fn accuracy_by_isnr_csv(r: &EvalReport) -> String {
    let mut s = String::from("isnr_db,n,correct,accuracy\n");
    for row in &r.per_isnr {
        s.push_str(&format!(
            "{},{},{},{:.6}\n",
            row.isnr_db, row.n, row.correct, row.accuracy
        ));
    }
    s
}

pub fn confusion_csv(r: &EvalReport) -> String {
    let names: Vec<&str> = JammingType::ALL.iter().map(|t| t.name()).collect();
    assert_eq!(
        r.confusion.len(),
        names.len(),
        "confusion matrix is {}x{} but there are {} classes",
        r.confusion.len(),
        r.confusion.len(),
        names.len()
    );
    let mut s = format!("label,{}\n", names.join(","));
    for (t, row) in r.confusion.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        s.push_str(&format!("{},{}\n", names[t], cells.join(",")));
    }
    s
}

pub fn adversarial_csv(rows: &[AdvRow]) -> String {
    let mut s = String::from("epsilon_255,n,correct,accuracy\n");
    for row in rows {
        s.push_str(&format!(
            "{},{},{},{:.6}\n",
            row.eps_255, row.report.n, row.report.correct, row.report.accuracy
        ));
    }
    s
}

pub fn adversarial_by_isnr_csv(rows: &[AdvRow]) -> String {
    let mut s = String::from("epsilon_255,isnr_db,n,correct,accuracy\n");
    for row in rows {
        for ir in &row.report.per_isnr {
            s.push_str(&format!(
                "{},{},{},{},{:.6}\n",
                row.eps_255, ir.isnr_db, ir.n, ir.correct, ir.accuracy
            ));
        }
    }
    s
}

/// Per-term FLOPs breakdown for one forward pass plus the band verdict.
/// Returns the rendered report and whether the total falls inside
/// [`FLOPS_BAND`].
pub fn flops_report(cfg: &ModelConfig) -> (String, bool) {
    let (total, terms) = count_flops(cfg, N_PATCHES);
    let mut s = String::from("term,flops\n");
    for t in &terms {
        s.push_str(&format!("{},{}\n", t.name, t.flops));
    }
    s.push_str(&format!("total,{}\n", total));
    let in_band = (FLOPS_BAND.0..=FLOPS_BAND.1).contains(&total);
    s.push_str(&format!(
        "band_low,{}\nband_high,{}\nin_band,{}\n",
        FLOPS_BAND.0, FLOPS_BAND.1, in_band
    ));
    (s, in_band)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::eval::IsnrRow;

    fn report() -> EvalReport {
        let mut confusion = vec![vec![0usize; 8]; 8];
        confusion[0][0] = 3;
        confusion[0][2] = 1;
        confusion[1][1] = 4;
        for t in 2..8 {
            confusion[t][t] = 4;
        }
        EvalReport {
            n: 32,
            correct: 31,
            accuracy: 31.0 / 32.0,
            per_isnr: vec![
                IsnrRow {
                    isnr_db: -14.0,
                    n: 16,
                    correct: 15,
                    accuracy: 15.0 / 16.0,
                },
                IsnrRow {
                    isnr_db: 8.0,
                    n: 16,
                    correct: 16,
                    accuracy: 1.0,
                },
            ],
            confusion,
        }
    }

    #[test]
    fn csv_tables_parse_back() {
        let r = report();
        let s = summary_csv(&r);
        let acc_line = s.lines().find(|l| l.starts_with("accuracy,")).unwrap();
        let acc: f64 = acc_line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((acc - r.accuracy).abs() < 1e-6);

        let by_isnr = accuracy_by_isnr_csv(&r);
        let mut lines = by_isnr.lines();
        assert_eq!(lines.next().unwrap(), "isnr_db,n,correct,accuracy");
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "-14");
        assert_eq!(first[1], "16");

        let conf = confusion_csv(&r);
        assert!(conf.starts_with("label,CW,LFM,AM,TFM,BPSK,NAM,QFM,SFM\n"));
        assert_eq!(conf.lines().count(), 9);
        // Row for class 0: 3 right, 1 confused with AM.
        let row0: Vec<&str> = conf.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row0[0], "CW");
        assert_eq!(row0[1], "3");
        assert_eq!(row0[3], "1");
    }

    #[test]
    fn adversarial_tables_cover_every_budget_and_isnr() {
        let rows = vec![
            AdvRow {
                eps_255: 0.0,
                report: report(),
            },
            AdvRow {
                eps_255: 14.0,
                report: report(),
            },
        ];
        let flat = adversarial_csv(&rows);
        assert_eq!(flat.lines().count(), 3);
        let nested = adversarial_by_isnr_csv(&rows);
        assert_eq!(nested.lines().count(), 1 + 2 * 2);
        assert!(nested.contains("14,8,16,16,1.000000"));
    }

    #[test]
    fn flops_report_names_every_term_and_checks_band() {
        let (s, in_band) = flops_report(&ModelConfig::full());
        assert!(s.contains("total,11002152"));
        // The full model costs more than the design budget window; the
        // report must say so rather than hide it.
        assert!(!in_band);
        assert!(s.contains("in_band,false"));
        let term_sum: u64 = s
            .lines()
            .skip(1)
            .take_while(|l| !l.starts_with("total,"))
            .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(term_sum, 11_002_152);
    }
}
