use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::datamodel::{DatasetManifest, Split, VoteRecord, CATEGORIES};
use crate::error::{Error, Result};

/// How strongly annotators agreed, per image.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AgreementBreakdown {
    /// Every counted vote for the same class.
    pub unanimous: usize,
    /// Winner holds 3 or 4 votes without being unanimous.
    pub majority_3_4: usize,
    /// A strict plurality of fewer than 3 votes (e.g. 2-1-1-1).
    pub plurality: usize,
    /// No strict plurality.
    pub ambiguous: usize,
}

impl AgreementBreakdown {
    pub fn total(&self) -> usize {
        self.unanimous + self.majority_3_4 + self.plurality + self.ambiguous
    }

    fn fraction(&self, n: usize) -> f64 {
        match self.total() {
            0 => 0.0,
            t => n as f64 / t as f64,
        }
    }

    pub fn fractions(&self) -> [f64; 4] {
        [
            self.fraction(self.unanimous),
            self.fraction(self.majority_3_4),
            self.fraction(self.plurality),
            self.fraction(self.ambiguous),
        ]
    }

    fn add(&mut self, counts: &[u32; 4]) {
        let total: u32 = counts.iter().sum();
        if total == 0 {
            return;
        }
        let top = *counts.iter().max().unwrap();
        let ties = counts.iter().filter(|&&c| c == top).count();
        self.add_recorded(top, total, ties > 1);
    }

    fn add_recorded(&mut self, top: u32, total: u32, ambiguous: bool) {
        if ambiguous {
            self.ambiguous += 1;
        } else if top == total {
            self.unanimous += 1;
        } else if top >= 3 {
            self.majority_3_4 += 1;
        } else {
            self.plurality += 1;
        }
    }

    /// Report lines, percentages to one decimal place.
    pub fn render(&self) -> String {
        let [u, m, p, a] = self.fractions();
        let mut out = String::new();
        let _ = writeln!(out, "all annotators agree:     {:>6} ({:.1}%)", self.unanimous, 100.0 * u);
        let _ = writeln!(out, "3 or 4 votes for winner:  {:>6} ({:.1}%)", self.majority_3_4, 100.0 * m);
        let _ = writeln!(out, "plurality of 2 votes:     {:>6} ({:.1}%)", self.plurality, 100.0 * p);
        let _ = writeln!(out, "no clear majority:        {:>6} ({:.1}%)", self.ambiguous, 100.0 * a);
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DatasetStats {
    pub total: usize,
    /// Canonical categories first (zero-filled), then any others by name.
    pub category_counts: Vec<(String, usize)>,
    /// `(number of text regions, number of images)`, ascending.
    pub text_regions_histogram: Vec<(u32, usize)>,
    /// `(votes for the winning class, number of images)`, ascending.
    pub winner_votes_histogram: Vec<(u32, usize)>,
    pub agreement: AgreementBreakdown,
    pub class_counts: BTreeMap<String, usize>,
    pub positives: usize,
    pub negatives: usize,
    pub train: usize,
    pub val: usize,
}

/// Summarises a manifest. Agreement comes from the raw votes where present,
/// otherwise from the recorded aggregation counts.
pub fn dataset_stats(manifest: &DatasetManifest, votes: &[VoteRecord]) -> DatasetStats {
    let mut per_image: HashMap<&str, [u32; 4]> = HashMap::new();
    for v in votes {
        per_image.entry(v.image_id.as_str()).or_default()[v.label.index()] += 1;
    }

    let mut categories: BTreeMap<&str, usize> = BTreeMap::new();
    let mut regions: BTreeMap<u32, usize> = BTreeMap::new();
    let mut winners: BTreeMap<u32, usize> = BTreeMap::new();
    let mut stats = DatasetStats {
        total: manifest.len(),
        ..Default::default()
    };
    for r in manifest {
        *categories.entry(r.category.as_str()).or_default() += 1;
        *regions.entry(r.n_text_regions).or_default() += 1;
        match r.binary_class {
            Some(b) if b.is_positive() => stats.positives += 1,
            Some(_) => stats.negatives += 1,
            None => {}
        }
        match r.split {
            Some(Split::Train) => stats.train += 1,
            Some(Split::Val) => stats.val += 1,
            None => {}
        }
        let label = r
            .aggregated
            .as_ref()
            .map(|a| a.label.to_string())
            .unwrap_or_else(|| "unlabelled".into());
        *stats.class_counts.entry(label).or_default() += 1;

        if let Some(counts) = per_image.get(r.image_id.as_str()) {
            stats.agreement.add(counts);
            *winners.entry(*counts.iter().max().unwrap()).or_default() += 1;
        } else if let Some(agg) = &r.aggregated {
            stats.agreement.add_recorded(agg.votes_for_winner, agg.total_votes, agg.ambiguous);
            *winners.entry(agg.votes_for_winner).or_default() += 1;
        }
    }

    stats.category_counts = canonical_order(categories.into_iter().map(|(c, n)| (c.to_string(), n)).collect());
    stats.text_regions_histogram = regions.into_iter().collect();
    stats.winner_votes_histogram = winners.into_iter().collect();
    stats
}

/// Canonical categories first, zero-filled, then the rest by name.
fn canonical_order(mut counts: BTreeMap<String, usize>) -> Vec<(String, usize)> {
    let mut out: Vec<(String, usize)> = CATEGORIES
        .iter()
        .map(|&c| (c.to_string(), counts.remove(c).unwrap_or(0)))
        .collect();
    out.extend(counts);
    out
}

impl DatasetStats {
    /// Combines statistics of two disjoint manifests.
    pub fn merge(&self, other: &DatasetStats) -> DatasetStats {
        fn merge_pairs<K: Ord + Clone>(a: &[(K, usize)], b: &[(K, usize)]) -> BTreeMap<K, usize> {
            let mut m = BTreeMap::new();
            for (k, n) in a.iter().chain(b) {
                *m.entry(k.clone()).or_insert(0) += n;
            }
            m
        }
        let category_counts = canonical_order(merge_pairs(&self.category_counts, &other.category_counts));
        let mut class_counts = self.class_counts.clone();
        for (k, n) in &other.class_counts {
            *class_counts.entry(k.clone()).or_default() += n;
        }
        DatasetStats {
            total: self.total + other.total,
            category_counts,
            text_regions_histogram: merge_pairs(&self.text_regions_histogram, &other.text_regions_histogram)
                .into_iter()
                .collect(),
            winner_votes_histogram: merge_pairs(&self.winner_votes_histogram, &other.winner_votes_histogram)
                .into_iter()
                .collect(),
            agreement: AgreementBreakdown {
                unanimous: self.agreement.unanimous + other.agreement.unanimous,
                majority_3_4: self.agreement.majority_3_4 + other.agreement.majority_3_4,
                plurality: self.agreement.plurality + other.agreement.plurality,
                ambiguous: self.agreement.ambiguous + other.agreement.ambiguous,
            },
            class_counts,
            positives: self.positives + other.positives,
            negatives: self.negatives + other.negatives,
            train: self.train + other.train,
            val: self.val + other.val,
        }
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "images: {}  (positive {}, negative {}; train {}, val {})\n",
            self.total, self.positives, self.negatives, self.train, self.val
        );
        out.push_str(&self.agreement.render());
        out
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes CSV tables and SVG plots into `dir`; returns the written paths.
pub fn write_stats(stats: &DatasetStats, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        write_file(&p, &body)?;
        written.push(p);
        Ok(())
    };

    let mut csv = String::from("category,images\n");
    for (c, n) in &stats.category_counts {
        let _ = writeln!(csv, "{c},{n}");
    }
    emit("category_counts.csv", csv)?;

    let mut csv = String::from("text_regions,images\n");
    for (r, n) in &stats.text_regions_histogram {
        let _ = writeln!(csv, "{r},{n}");
    }
    emit("text_regions_histogram.csv", csv)?;

    let mut csv = String::from("votes_for_winner,images\n");
    for (v, n) in &stats.winner_votes_histogram {
        let _ = writeln!(csv, "{v},{n}");
    }
    emit("winner_votes_histogram.csv", csv)?;

    let a = &stats.agreement;
    let f = a.fractions();
    let csv = format!(
        "bucket,images,fraction\nunanimous,{},{:.6}\nmajority_3_4,{},{:.6}\nplurality,{},{:.6}\nambiguous,{},{:.6}\n",
        a.unanimous, f[0], a.majority_3_4, f[1], a.plurality, f[2], a.ambiguous, f[3]
    );
    emit("agreement.csv", csv)?;

    emit("summary.json", serde_json::to_string_pretty(stats)?)?;
    emit("category_counts.svg", category_svg(&stats.category_counts))?;
    emit("text_regions_loglog.svg", loglog_svg(&stats.text_regions_histogram))?;
    Ok(written)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;

fn svg_open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"10\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n\
         <line x1=\"{PAD}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{}\" stroke=\"black\"/>\n",
        W / 2.0,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    )
}

fn category_svg(counts: &[(String, usize)]) -> String {
    let mut svg = svg_open("Images per product category");
    let max = counts.iter().map(|c| c.1).max().unwrap_or(0).max(1) as f64;
    let slot = (W - 2.0 * PAD) / counts.len().max(1) as f64;
    for (i, (name, n)) in counts.iter().enumerate() {
        let bh = (H - 2.0 * PAD) * *n as f64 / max;
        let x = PAD + i as f64 * slot;
        let _ = writeln!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" fill=\"steelblue\"><title>{name}: {n}</title></rect>",
            x + 1.0,
            H - PAD - bh,
            slot - 2.0
        );
        let _ = writeln!(
            svg,
            "<text transform=\"translate({:.1},{:.1}) rotate(60)\">{name}</text>",
            x + slot / 2.0,
            H - PAD + 4.0
        );
    }
    let _ = writeln!(svg, "<text x=\"12\" y=\"{PAD}\">{max}</text>\n</svg>");
    svg
}

fn loglog_svg(hist: &[(u32, usize)]) -> String {
    let mut svg = svg_open("Text regions per image (log-log)");
    // log10(1 + x) keeps images without regions on the plot.
    let lx = |x: u32| (1.0 + x as f64).log10();
    let ly = |y: usize| (1.0 + y as f64).log10();
    let xmax = hist.iter().map(|p| lx(p.0)).fold(1.0, f64::max);
    let ymax = hist.iter().map(|p| ly(p.1)).fold(1.0, f64::max);
    for &(x, y) in hist {
        let cx = PAD + (W - 2.0 * PAD) * lx(x) / xmax;
        let cy = H - PAD - (H - 2.0 * PAD) * ly(y) / ymax;
        let _ = writeln!(
            svg,
            "<circle cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"3\" fill=\"darkred\"><title>{x} regions: {y} images</title></circle>"
        );
    }
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">log10(1 + regions)</text>\n\
         <text transform=\"translate(14,{}) rotate(-90)\" text-anchor=\"middle\">log10(1 + images)</text>\n</svg>",
        W / 2.0,
        H - 10.0,
        H / 2.0
    );
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::{AggregatedLabel, FourClass, Label, LabelSource, ManifestRecord};
    use FourClass::*;

    fn record(id: &str, cat: &str, regions: u32) -> ManifestRecord {
        let mut r = ManifestRecord::new(id, format!("{id}.png"), cat);
        r.n_text_regions = regions;
        r
    }

    fn votes(id: &str, labels: &[FourClass]) -> Vec<VoteRecord> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| VoteRecord {
                worker_id: format!("w{i}"),
                image_id: id.into(),
                label,
                vote_time_s: 10.0,
                batch: 0,
            })
            .collect()
    }

    #[test]
    fn single_record() {
        let m = DatasetManifest::from_records(vec![record("a", "lamps", 3)]).unwrap();
        let s = dataset_stats(&m, &votes("a", &[Both; 5]));
        assert_eq!(s.total, 1);
        assert_eq!(s.category_counts.len(), 25);
        assert_eq!(s.category_counts.iter().map(|c| c.1).sum::<usize>(), 1);
        assert_eq!(s.category_counts.iter().find(|c| c.0 == "lamps").unwrap().1, 1);
        assert_eq!(s.agreement.unanimous, 1);
        assert_eq!(s.agreement.fractions()[0], 1.0);
    }

    #[test]
    fn constructed_counts_match_exactly() {
        // Independent construction: category i gets i + 1 images with i regions each.
        let mut recs = Vec::new();
        let mut expected_cats = vec![0usize; 25];
        let mut expected_regions: BTreeMap<u32, usize> = BTreeMap::new();
        for (i, cat) in CATEGORIES.iter().enumerate().take(6) {
            for k in 0..=i {
                recs.push(record(&format!("{cat}-{k}"), cat, i as u32));
                expected_cats[i] += 1;
                *expected_regions.entry(i as u32).or_default() += 1;
            }
        }
        recs.push(record("odd", "garage", 40));
        let m = DatasetManifest::from_records(recs).unwrap();
        let s = dataset_stats(&m, &[]);
        for (i, cat) in CATEGORIES.iter().enumerate() {
            assert_eq!(s.category_counts[i], (cat.to_string(), expected_cats[i]));
        }
        assert_eq!(s.category_counts[25], ("garage".to_string(), 1));
        expected_regions.insert(40, 1);
        assert_eq!(s.text_regions_histogram, expected_regions.into_iter().collect::<Vec<_>>());
        assert_eq!(s.category_counts.iter().map(|c| c.1).sum::<usize>(), s.total);
    }

    #[test]
    fn agreement_buckets() {
        let mut recs = Vec::new();
        let mut all = Vec::new();
        for (id, labels) in [
            ("u", vec![None; 5]),
            ("m4", vec![None, None, None, None, Both]),
            ("m3", vec![Organic, Organic, Organic, None, Both]),
            ("p", vec![Both, Both, Organic, None, Overlaying]),
            ("a", vec![Both, Both, None, None, Organic]),
        ] {
            recs.push(record(id, "rugs", 1));
            all.extend(votes(id, &labels));
        }
        let s = dataset_stats(&DatasetManifest::from_records(recs).unwrap(), &all);
        assert_eq!(
            s.agreement,
            AgreementBreakdown {
                unanimous: 1,
                majority_3_4: 2,
                plurality: 1,
                ambiguous: 1
            }
        );
        assert!((s.agreement.fractions().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(s.winner_votes_histogram, vec![(2, 2), (3, 1), (4, 1), (5, 1)]);
    }

    #[test]
    fn recorded_counts_stand_in_for_missing_votes() {
        let mut recs = Vec::new();
        for (id, label, top, ambiguous) in [
            ("u", Label::Class(None), 5, false),
            ("m", Label::Class(Both), 3, false),
            ("p", Label::Class(Organic), 2, false),
            ("a", Label::Unresolved, 2, true),
        ] {
            let mut r = record(id, "rugs", 0);
            r.set_aggregated(AggregatedLabel {
                image_id: id.into(),
                label,
                votes_for_winner: top,
                total_votes: 5,
                ambiguous,
                source: LabelSource::Vote,
            });
            recs.push(r);
        }
        let s = dataset_stats(&DatasetManifest::from_records(recs).unwrap(), &[]);
        assert_eq!(
            s.agreement,
            AgreementBreakdown {
                unanimous: 1,
                majority_3_4: 1,
                plurality: 1,
                ambiguous: 1
            }
        );
    }

    #[test]
    fn report_layout_uses_one_decimal_percentages() {
        // Bucket sizes shaped like a 4836-image crowd-labelled set.
        let a = AgreementBreakdown {
            unanimous: 2911,
            majority_3_4: 1654,
            plurality: 206,
            ambiguous: 65,
        };
        let text = a.render();
        assert!(text.contains("2911 (60.2%)"), "{text}");
        assert!(text.contains("1654 (34.2%)"), "{text}");
        assert!(text.contains("65 (1.3%)"), "{text}");
    }

    #[test]
    fn totals_are_conserved_under_concatenation() {
        let m1 = DatasetManifest::from_records(vec![record("a", "lamps", 1), record("b", "sofas", 2)]).unwrap();
        let m2 = DatasetManifest::from_records(vec![record("c", "lamps", 2), record("d", "attic", 9)]).unwrap();
        let mut v = votes("a", &[None; 5]);
        v.extend(votes("c", &[Both, Both, Both, None, None]));
        let joint = DatasetManifest::from_records(m1.records().iter().chain(m2.records()).cloned().collect()).unwrap();
        let merged = dataset_stats(&m1, &v).merge(&dataset_stats(&m2, &v));
        assert_eq!(merged, dataset_stats(&joint, &v));
    }

    #[test]
    fn files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::from_records(vec![record("a", "lamps", 3), record("b", "lamps", 0)]).unwrap();
        let paths = write_stats(&dataset_stats(&m, &[]), dir.path()).unwrap();
        assert_eq!(paths.len(), 7);
        let svg = std::fs::read_to_string(dir.path().join("text_regions_loglog.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        let csv = std::fs::read_to_string(dir.path().join("category_counts.csv")).unwrap();
        assert!(csv.contains("lamps,2"));
    }
}
