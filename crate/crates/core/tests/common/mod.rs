#![allow(dead_code, clippy::excessive_precision)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;

use adrsig::config::{PartialConfig, RunConfig};
use adrsig::readcode::KeyMode;
use adrsig::synth::{standard_vocabulary, Injection, SynthConfig, SyntheticData};
use chrono::{Duration, NaiveDate};

pub const DRUG: &str = "PIO";

// ---------------------------------------------------------------------------
// Gauss-Kronrod oracle for the two-sided Student t tail, free of gamma
// functions: p = tail(t) / tail(0) on the unnormalised density.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Globally adaptive: keep splitting the interval with the largest error
/// estimate until the summed estimate meets the relative tolerance.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let (k, e) = gk15(f, a, b);
    let mut parts = vec![(a, b, k, e)];
    for _ in 0..20_000 {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= rel * total.abs() {
            break;
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].3.total_cmp(&parts[j].3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        for (x, y) in [(lo, mid), (mid, hi)] {
            let (k, e) = gk15(f, x, y);
            parts.push((x, y, k, e));
        }
    }
    // sum small to large
    let mut ks: Vec<f64> = parts.iter().map(|p| p.2).collect();
    ks.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    ks.iter().sum()
}

fn density(s: f64, df: f64) -> f64 {
    (-(df + 1.0) / 2.0 * (s * s / df).ln_1p()).exp()
}

/// Integral of the unnormalised density over [t, inf).
fn upper(t: f64, df: f64) -> f64 {
    let far = |from: f64| {
        // s = from / u maps (0, 1] onto [from, inf)
        let g = move |u: f64| {
            if u <= 0.0 {
                0.0
            } else {
                density(from / u, df) * from / (u * u)
            }
        };
        integrate(&g, 0.0, 1.0, 1e-15)
    };
    if t >= 1.0 {
        far(t)
    } else {
        integrate(&|s| density(s, df), t, 1.0, 1e-15) + far(1.0)
    }
}

pub fn t_tail_oracle(t_abs: f64, df: f64) -> f64 {
    upper(t_abs, df) / upper(0.0, df)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    if want == 0.0 {
        got.abs()
    } else {
        ((got - want) / want).abs()
    }
}

/// 20 log-spaced degrees of freedom in [1, 400] by 10 t values in [0, 40].
pub fn kernel_grid() -> Vec<(f64, f64)> {
    let ts = [0.0, 0.25, 0.8, 1.5, 2.228, 3.0, 5.0, 9.0, 17.0, 40.0];
    let mut grid = Vec::new();
    for i in 0..20 {
        let df = (400f64.ln() * i as f64 / 19.0).exp().round().max(1.0);
        for &t in &ts {
            grid.push((t, df));
        }
    }
    grid
}

// ---------------------------------------------------------------------------
// Published rows

pub struct PublishedRow {
    pub code: String,
    pub description: String,
    pub n_before: u64,
    pub n_after: u64,
    pub r1: String,
    pub r2: String,
}

pub fn published_rows() -> Vec<PublishedRow> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/published_rows.tsv");
    let text = std::fs::read_to_string(path).expect("fixture");
    text.lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            PublishedRow {
                code: f[0].to_string(),
                description: f[1].to_string(),
                n_before: f[2].parse().unwrap(),
                n_after: f[3].parse().unwrap(),
                r1: f[4].to_string(),
                r2: f[5].to_string(),
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Synthetic set-ups

pub fn synth_config(seed: u64, n_exposed: usize, vocab: usize, window_prob: f64) -> SynthConfig {
    SynthConfig {
        seed,
        n_exposed,
        vocabulary: standard_vocabulary(vocab, window_prob, 60),
        injections: Vec::new(),
        ..SynthConfig::default()
    }
}

/// `count` after-only injections spread evenly over the vocabulary.
pub fn with_injections(mut c: SynthConfig, count: usize, multiplier: f64) -> SynthConfig {
    let step = c.vocabulary.len() / count;
    c.injections = (0..count)
        .map(|i| Injection {
            code: c.vocabulary[i * step + step / 2].code,
            multiplier,
            after_only: true,
        })
        .collect();
    c
}

pub fn run_config(mode: KeyMode, group_size: usize) -> RunConfig {
    RunConfig::resolve(&PartialConfig {
        input_dir: Some(PathBuf::from("unused")),
        drug_codes: Some(vec![DRUG.to_string()]),
        mode: Some(mode),
        group_size: Some(group_size),
        ..Default::default()
    })
    .expect("valid config")
}

// ---------------------------------------------------------------------------
// Brute-force rescan of raw records

fn level3_string(code: &str) -> String {
    format!("{}..00", &code[..3])
}

/// Per event key, the number of cohort patients with at least one
/// occurrence in the before and after windows.
pub fn rescan_counts(data: &SyntheticData, days: i64, mode: KeyMode) -> BTreeMap<String, (u64, u64)> {
    let mut index: HashMap<&str, NaiveDate> = HashMap::new();
    for rx in &data.prescriptions {
        if rx.drug_code == DRUG {
            let e = index.entry(rx.patient_id.as_str()).or_insert(rx.date);
            if rx.date < *e {
                *e = rx.date;
            }
        }
    }
    let mut before: BTreeSet<(String, &str)> = BTreeSet::new();
    let mut after: BTreeSet<(String, &str)> = BTreeSet::new();
    for ev in &data.events {
        let Some(&idx) = index.get(ev.patient_id.as_str()) else {
            continue;
        };
        let raw = ev.code.as_str();
        let key = match mode {
            KeyMode::FullCode => raw.to_string(),
            KeyMode::Level3 => level3_string(raw),
        };
        if ev.date >= idx - Duration::days(days) && ev.date < idx {
            before.insert((key, ev.patient_id.as_str()));
        } else if ev.date >= idx && ev.date < idx + Duration::days(days) {
            after.insert((key, ev.patient_id.as_str()));
        }
    }
    let mut out: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for (k, _) in before {
        out.entry(k).or_default().0 += 1;
    }
    for (k, _) in after {
        out.entry(k).or_default().1 += 1;
    }
    out
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
