//! Channel-indexing feedback.
//!
//! Every pair turns its metric into one of `K2` levels and sends a
//! content-free indicator on the resource element (RE) with that level's
//! index. The base station reads only which REs are occupied and by how
//! many transmitters; the lowest exclusively occupied RE identifies the pair
//! to schedule.

use std::collections::BTreeMap;
use std::io::Write;

use crate::config::ScenarioConfig;
use crate::error::FeedbackError;
use crate::lyapunov::LyapunovParams;

/// PUCCH format 2 reports per RB.
const FORMAT2_MUX_PER_RB: usize = 12;
/// Subcarriers per RB.
const SUBCARRIERS_PER_RB: usize = 12;

/// Per-slot feedback budget: `k1` quantized CSI reports or `k2` indicator REs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedbackCapacity {
    pub k1: usize,
    pub k2: usize,
}

/// `K1 = 12 N_RB` and `K2 = N_RB * 12 N_OC / Delta_shift`.
pub fn capacities_from_pucch(n_rb: usize, delta_shift: usize, n_oc: usize) -> Result<FeedbackCapacity, FeedbackError> {
    if n_rb == 0 {
        return Err(FeedbackError::ZeroParameter("n_rb_feedback"));
    }
    if delta_shift == 0 {
        return Err(FeedbackError::ZeroParameter("delta_shift"));
    }
    if n_oc == 0 {
        return Err(FeedbackError::ZeroParameter("n_oc"));
    }
    let mux = SUBCARRIERS_PER_RB * n_oc;
    if mux % delta_shift != 0 {
        return Err(FeedbackError::NonDivisibleShift { delta_shift, mux });
    }
    Ok(FeedbackCapacity {
        k1: FORMAT2_MUX_PER_RB * n_rb,
        k2: n_rb * (mux / delta_shift),
    })
}

/// Capacities from the config's PUCCH parameters.
pub fn capacities(cfg: &ScenarioConfig) -> Result<FeedbackCapacity, FeedbackError> {
    capacities_from_pucch(cfg.n_rb_feedback, cfg.delta_shift, cfg.n_oc)
}

/// Capacities with the config's explicit `k1`/`k2` overrides applied.
pub fn effective_capacities(cfg: &ScenarioConfig) -> Result<FeedbackCapacity, FeedbackError> {
    let mut cap = match (cfg.k1, cfg.k2) {
        (k1, k2) if k1 > 0 && k2 > 0 => FeedbackCapacity { k1, k2 },
        _ => capacities(cfg)?,
    };
    if cfg.k1 > 0 {
        cap.k1 = cfg.k1;
    }
    if cfg.k2 > 0 {
        cap.k2 = cfg.k2;
    }
    Ok(cap)
}

/// `K2` uniformly spaced levels from `v_min` to `v_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexingMap {
    pub v_min: f64,
    pub v_max: f64,
    levels: Vec<f64>,
}

impl IndexingMap {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn k2(&self) -> usize {
        self.levels.len()
    }

    pub fn spacing(&self) -> f64 {
        (self.v_max - self.v_min) / (self.levels.len() - 1) as f64
    }

    /// 1-based level `a_j`.
    pub fn level(&self, j: usize) -> f64 {
        self.levels[j - 1]
    }
}

pub fn build_map(v_min: f64, v_max: f64, k2: usize) -> Result<IndexingMap, FeedbackError> {
    if k2 < 2 {
        return Err(FeedbackError::TooFewLevels(k2));
    }
    // the span test also rejects bounds so close that the levels would coincide
    let step = (v_max - v_min) / (k2 - 1) as f64;
    if !(v_min < v_max) || !v_min.is_finite() || !v_max.is_finite() || v_min + step <= v_min {
        return Err(FeedbackError::ReversedBounds { v_min, v_max });
    }
    let mut levels: Vec<f64> = (0..k2).map(|j| v_min + j as f64 * step).collect();
    levels[k2 - 1] = v_max;
    Ok(IndexingMap { v_min, v_max, levels })
}

/// Quantizes down: the largest level strictly below `v` and its 1-based RE
/// index. `v <= a_1` maps to `(a_1, 1)`; anything above `a_K2` to the top RE.
pub fn quantize(v: f64, map: &IndexingMap) -> (f64, usize) {
    let below = map.levels.partition_point(|&a| a < v);
    let k = below.max(1);
    (map.level(k), k)
}

/// Which pairs sent an indicator on which RE (1-based indices).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeedbackFrame {
    occupancy: BTreeMap<usize, Vec<usize>>,
}

impl FeedbackFrame {
    pub fn occupancy(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.occupancy
    }

    pub fn is_empty(&self) -> bool {
        self.occupancy.is_empty()
    }

    pub fn indicator_count(&self) -> usize {
        self.occupancy.values().map(Vec::len).sum()
    }

    /// Appends `slot,re_index,pair_ids` rows (ids joined by `;`).
    pub fn write_trace_rows<W: Write>(&self, out: &mut W, slot: u64) -> std::io::Result<()> {
        for (re, ids) in &self.occupancy {
            let ids: Vec<String> = ids.iter().map(usize::to_string).collect();
            writeln!(out, "{slot},{re},{}", ids.join(";"))?;
        }
        Ok(())
    }
}

pub const FRAME_TRACE_HEADER: &str = "slot,re_index,pair_ids";

pub fn assemble_frame(placements: &[(usize, usize)]) -> Result<FeedbackFrame, FeedbackError> {
    let mut occupancy: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut seen = std::collections::HashSet::with_capacity(placements.len());
    for &(pair, re) in placements {
        if !seen.insert(pair) {
            return Err(FeedbackError::DuplicatePair(pair));
        }
        occupancy.entry(re).or_default().push(pair);
    }
    for ids in occupancy.values_mut() {
        ids.sort_unstable();
    }
    Ok(FeedbackFrame { occupancy })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameResolution {
    pub winner: Option<usize>,
    /// Lowest RE with two or more indicators.
    pub collision_index: Option<usize>,
}

/// The occupant of the lowest singly-occupied RE wins, whatever collided on
/// lower REs. No singly-occupied RE at all is an overall collision.
pub fn resolve_frame(frame: &FeedbackFrame) -> FrameResolution {
    let winner = frame
        .occupancy
        .values()
        .find(|ids| ids.len() == 1)
        .map(|ids| ids[0]);
    let collision_index = frame
        .occupancy
        .iter()
        .find(|(_, ids)| ids.len() >= 2)
        .map(|(&re, _)| re);
    FrameResolution {
        winner,
        collision_index,
    }
}

/// After a collision at RE `c`: `r = c`, and `f` grows unless `c` is the
/// top RE, which resets `f` to 0 and re-opens the full interval.
pub fn update_mapping(params: LyapunovParams, c: usize, k2: usize) -> LyapunovParams {
    debug_assert!((1..=k2).contains(&c));
    LyapunovParams {
        r: c,
        f: if c < k2 { params.f + 1 } else { 0 },
        ..params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_capacities() {
        assert_eq!(
            capacities_from_pucch(2, 1, 3).unwrap(),
            FeedbackCapacity { k1: 24, k2: 72 }
        );
        assert_eq!(capacities(&ScenarioConfig::default()).unwrap().k2, 72);
    }

    #[test]
    fn capacity_edge_cases() {
        assert_eq!(capacities_from_pucch(1, 36, 3).unwrap().k2, 1);
        assert_eq!(
            capacities_from_pucch(0, 1, 3).unwrap_err(),
            FeedbackError::ZeroParameter("n_rb_feedback")
        );
        assert_eq!(
            capacities_from_pucch(1, 5, 3).unwrap_err(),
            FeedbackError::NonDivisibleShift { delta_shift: 5, mux: 36 }
        );
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = ScenarioConfig {
            k1: 4,
            k2: 12,
            ..ScenarioConfig::default()
        };
        assert_eq!(effective_capacities(&cfg).unwrap(), FeedbackCapacity { k1: 4, k2: 12 });
        let cfg = ScenarioConfig {
            k2: 12,
            ..ScenarioConfig::default()
        };
        assert_eq!(effective_capacities(&cfg).unwrap(), FeedbackCapacity { k1: 24, k2: 12 });
    }

    #[test]
    fn map_levels() {
        let map = build_map(0.0, 10.0, 3).unwrap();
        assert_eq!(map.levels(), &[0.0, 5.0, 10.0]);
        let map = build_map(-4.0, 7.0, 2).unwrap();
        assert_eq!(map.levels(), &[-4.0, 7.0]);
        let map = build_map(-3.0, 8.0, 12).unwrap();
        let gaps: Vec<f64> = map.levels().windows(2).map(|w| w[1] - w[0]).collect();
        assert!(gaps.iter().all(|g| (g - 1.0).abs() < 1e-12));
        assert!(build_map(5.0, 5.0, 3).is_err());
        assert!(build_map(5.0, 1.0, 3).is_err());
        assert_eq!(build_map(0.0, 1.0, 1).unwrap_err(), FeedbackError::TooFewLevels(1));
    }

    #[test]
    fn quantize_down_with_edges() {
        let map = build_map(0.0, 10.0, 3).unwrap();
        assert_eq!(quantize(6.0, &map), (5.0, 2));
        assert_eq!(quantize(5.0, &map), (0.0, 1));
        assert_eq!(quantize(0.0, &map), (0.0, 1));
        assert_eq!(quantize(-3.0, &map), (0.0, 1));
        assert_eq!(quantize(10.0, &map), (5.0, 2));
        assert_eq!(quantize(11.0, &map), (10.0, 3));
    }

    #[test]
    fn assemble_groups_by_re() {
        let frame = assemble_frame(&[(1, 3), (2, 3), (3, 7)]).unwrap();
        assert_eq!(frame.occupancy()[&3], vec![1, 2]);
        assert_eq!(frame.occupancy()[&7], vec![3]);
        assert!(assemble_frame(&[]).unwrap().is_empty());
        assert_eq!(assemble_frame(&[(4, 2)]).unwrap().occupancy().len(), 1);
        assert_eq!(
            assemble_frame(&[(1, 3), (1, 4)]).unwrap_err(),
            FeedbackError::DuplicatePair(1)
        );
    }

    #[test]
    fn resolve_examples() {
        let frame = assemble_frame(&[(1, 3), (2, 3), (3, 7)]).unwrap();
        assert_eq!(
            resolve_frame(&frame),
            FrameResolution { winner: Some(3), collision_index: Some(3) }
        );
        let frame = assemble_frame(&[(5, 1)]).unwrap();
        assert_eq!(
            resolve_frame(&frame),
            FrameResolution { winner: Some(5), collision_index: None }
        );
        let frame = assemble_frame(&[(1, 2), (2, 2), (3, 4), (4, 4)]).unwrap();
        assert_eq!(
            resolve_frame(&frame),
            FrameResolution { winner: None, collision_index: Some(2) }
        );
        assert_eq!(resolve_frame(&FeedbackFrame::default()), FrameResolution::default());
    }

    #[test]
    fn mapping_update_rule() {
        let mut p = LyapunovParams::new(1.0);
        p.f = 2;
        let q = update_mapping(p, 10, 72);
        assert_eq!((q.r, q.f), (10, 3));
        let q = update_mapping(p, 72, 72);
        assert_eq!((q.r, q.f), (72, 0));
        let q = update_mapping(p, 1, 72);
        assert_eq!((q.r, q.f), (1, 3));
    }

    #[test]
    fn trace_rows() {
        let frame = assemble_frame(&[(1, 3), (2, 3), (3, 7)]).unwrap();
        let mut buf = Vec::new();
        frame.write_trace_rows(&mut buf, 9).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "9,3,1;2\n9,7,3\n");
    }

    proptest::proptest! {
        #[test]
        fn quantize_is_monotone(a in -100.0f64..100.0, b in -100.0f64..100.0, k2 in 2usize..80) {
            let map = build_map(-50.0, 50.0, k2).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assert!(quantize(lo, &map).1 <= quantize(hi, &map).1);
        }

        #[test]
        fn resolution_ignores_insertion_order(
            res in proptest::collection::vec(1usize..6, 1..8),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut placements: Vec<(usize, usize)> = res.iter().copied().enumerate().collect();
            let a = resolve_frame(&assemble_frame(&placements).unwrap());
            placements.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let b = resolve_frame(&assemble_frame(&placements).unwrap());
            proptest::prop_assert_eq!(a, b);
            // the winner has the lowest level among exclusively placed pairs
            if let Some(w) = a.winner {
                let exclusive: Vec<usize> = res.iter().copied()
                    .filter(|&r| res.iter().filter(|&&o| o == r).count() == 1)
                    .collect();
                proptest::prop_assert_eq!(res[w], *exclusive.iter().min().unwrap());
            }
        }

        #[test]
        fn shrinking_update_refines_spacing(c in 1usize..12, f in 0u32..4, t in 1u64..100) {
            let table = crate::amc::default_amc_table();
            let k2 = 12;
            let mut p = LyapunovParams::new(1e12);
            p.slot = t;
            p.f = f;
            p.r = k2;
            let (lo, hi) = crate::lyapunov::metric_bounds(&p, 1e4, 0.25, &table, k2);
            let next = update_mapping(p, c, k2);
            let (lo2, hi2) = crate::lyapunov::metric_bounds(&next, 1e4, 0.25, &table, k2);
            let before = build_map(lo, hi, k2).unwrap().spacing();
            let after = build_map(lo2, hi2, k2).unwrap().spacing();
            proptest::prop_assert!(after < before);
        }
    }
}
