//! Reproducible test networks.

use std::collections::{BTreeSet, VecDeque};

use num_integer::Integer;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::choice::STREAM_ALGORITHM;
use crate::error::{invalid, Error, Result};
use crate::network::{ArcSpec, Network, NodeId};

/// The five-node example network: source 1, sink 5.
///
/// | arc   | gamma | sigma |
/// |-------|-------|-------|
/// | (1,2) | 1     | 1     |
/// | (2,3) | 1     | 1     |
/// | (2,4) | 3     | 1     |
/// | (3,4) | 1     | 1     |
/// | (4,5) | 0     | 0     |
pub fn fig2_network() -> Network {
    Network::new(
        (1..=5).map(NodeId),
        [
            ArcSpec::new(1, 2, 1, 1),
            ArcSpec::new(2, 3, 1, 1),
            ArcSpec::new(2, 4, 3, 1),
            ArcSpec::new(3, 4, 1, 1),
            ArcSpec::new(4, 5, 0, 0),
        ],
        [NodeId(1)],
        [NodeId(5)],
    )
    .expect("fixture is well formed")
    .with_metadata(json!({ "generator": "fig2" }))
}

/// Integer altitude raster with obstacle, source and sink pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AltitudeMap {
    pub width: usize,
    pub height: usize,
    /// Row-major altitudes, `h[y * width + x]`.
    pub h: Vec<i64>,
    pub obstacles: BTreeSet<(usize, usize)>,
    pub sources: Vec<(usize, usize)>,
    pub sinks: Vec<(usize, usize)>,
}

impl AltitudeMap {
    pub fn flat(width: usize, height: usize) -> Self {
        AltitudeMap {
            width,
            height,
            h: vec![0; width * height],
            obstacles: BTreeSet::new(),
            sources: Vec::new(),
            sinks: Vec::new(),
        }
    }

    pub fn altitude(&self, x: usize, y: usize) -> i64 {
        self.h[y * self.width + x]
    }

    /// Superimposed square cones: each peak `(x, y, top)` contributes
    /// `top - slope * chebyshev_distance`, floored at 0; the altitude is the
    /// maximum contribution.
    pub fn cones(width: usize, height: usize, peaks: &[(usize, usize, i64)], slope: i64) -> Self {
        let mut map = AltitudeMap::flat(width, height);
        for y in 0..height {
            for x in 0..width {
                map.h[y * width + x] = peaks
                    .iter()
                    .map(|&(px, py, top)| {
                        let d = x.abs_diff(px).max(y.abs_diff(py)) as i64;
                        (top - slope * d).max(0)
                    })
                    .max()
                    .unwrap_or(0);
            }
        }
        map
    }

    /// `count` cones of slope 40 with tops in `120..=240` at seeded random
    /// positions.
    pub fn random_hills(width: usize, height: usize, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let peaks: Vec<_> = (0..count)
            .map(|_| {
                (
                    rng.gen_range(0..width.max(1)),
                    rng.gen_range(0..height.max(1)),
                    40 * rng.gen_range(3..=6),
                )
            })
            .collect();
        AltitudeMap::cones(width, height, &peaks, 40)
    }

    /// Parses a plain (P2) PGM raster. Values may be negative. Comment lines
    /// of the form `# source X Y`, `# sink X Y` and `# obstacle X Y` mark
    /// special pixels.
    pub fn from_pgm(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut sources = Vec::new();
        let mut sinks = Vec::new();
        let mut obstacles = BTreeSet::new();
        for line in text.lines() {
            let (data, comment) = match line.find('#') {
                Some(p) => (&line[..p], Some(&line[p + 1..])),
                None => (line, None),
            };
            tokens.extend(data.split_whitespace().map(str::to_owned));
            if let Some(c) = comment {
                let words: Vec<&str> = c.split_whitespace().collect();
                if let [kind @ ("source" | "sink" | "obstacle"), x, y] = words.as_slice() {
                    let parse = |s: &str| {
                        s.parse::<usize>()
                            .map_err(|_| invalid(format!("bad pixel coordinate {s:?} in PGM directive")))
                    };
                    let p = (parse(x)?, parse(y)?);
                    match *kind {
                        "source" => sources.push(p),
                        "sink" => sinks.push(p),
                        _ => {
                            obstacles.insert(p);
                        }
                    }
                }
            }
        }
        let mut it = tokens.into_iter();
        if it.next().as_deref() != Some("P2") {
            return Err(invalid("PGM raster must start with the P2 magic"));
        }
        let mut number = |what: &str| -> Result<i64> {
            let t = it.next().ok_or_else(|| invalid(format!("PGM raster truncated before {what}")))?;
            t.parse().map_err(|_| invalid(format!("bad {what} {t:?} in PGM raster")))
        };
        let width = number("width")?;
        let height = number("height")?;
        if width <= 0 || height <= 0 {
            return Err(invalid("PGM raster must have positive dimensions"));
        }
        let _maxval = number("maxval")?;
        let (width, height) = (width as usize, height as usize);
        let h = (0..width * height)
            .map(|_| number("altitude"))
            .collect::<Result<Vec<_>>>()?;
        if it.next().is_some() {
            return Err(invalid("PGM raster has trailing values"));
        }
        let map = AltitudeMap {
            width,
            height,
            h,
            obstacles,
            sources,
            sinks,
        };
        map.check_pixels()?;
        Ok(map)
    }

    pub fn to_pgm(&self) -> String {
        let mut out = String::from("P2\n");
        for &(x, y) in &self.sources {
            out.push_str(&format!("# source {x} {y}\n"));
        }
        for &(x, y) in &self.sinks {
            out.push_str(&format!("# sink {x} {y}\n"));
        }
        for &(x, y) in &self.obstacles {
            out.push_str(&format!("# obstacle {x} {y}\n"));
        }
        let maxval = self.h.iter().copied().max().unwrap_or(0).max(1);
        out.push_str(&format!("{} {}\n{}\n", self.width, self.height, maxval));
        for row in self.h.chunks(self.width) {
            let line: Vec<String> = row.iter().map(i64::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    fn check_pixels(&self) -> Result<()> {
        let inside = |&(x, y): &(usize, usize)| x < self.width && y < self.height;
        for p in self.sources.iter().chain(&self.sinks).chain(&self.obstacles) {
            if !inside(p) {
                return Err(invalid(format!("pixel {p:?} outside the {}x{} map", self.width, self.height)));
            }
        }
        for p in self.sources.iter().chain(&self.sinks) {
            if self.obstacles.contains(p) {
                return Err(invalid(format!("source/sink pixel {p:?} is an obstacle")));
            }
        }
        Ok(())
    }
}

/// Node id of pixel `(x, y)` in a grid network of the given width.
pub fn pixel_node(width: usize, x: usize, y: usize) -> NodeId {
    NodeId((y * width + x + 1) as u32)
}

/// Pixel of a grid network node.
pub fn node_pixel(width: usize, id: NodeId) -> (usize, usize) {
    let k = id.0 as usize - 1;
    (k % width, k / width)
}

/// Parses an exact rational written `p/q` or as an integer. Decimal
/// fractions are rejected.
pub fn parse_ratio(text: &str) -> Result<Ratio<i64>> {
    let bad = || invalid(format!("expected an exact rational like 2/5, got {text:?}"));
    let (p, q) = match text.trim().split_once('/') {
        Some((p, q)) => (p.trim().parse::<i64>().map_err(|_| bad())?, q.trim().parse::<i64>().map_err(|_| bad())?),
        None => (text.trim().parse::<i64>().map_err(|_| bad())?, 1),
    };
    if q == 0 {
        return Err(invalid(format!("zero denominator in {text:?}")));
    }
    Ok(Ratio::new(p, q))
}

/// Arc cost for an altitude change `dh`: `ceil(m_minus (dh - h0))` when
/// `dh <= h0`, `ceil(m_plus (dh - h0))` otherwise. Exact.
pub fn altitude_cost(dh: i64, h0: i64, m_minus: Ratio<i64>, m_plus: Ratio<i64>) -> Result<i64> {
    let m = if dh <= h0 { m_minus } else { m_plus };
    let rise = dh
        .checked_sub(h0)
        .ok_or_else(|| Error::Overflow("altitude difference".into()))?;
    // ratios are kept normalized, so the denominator is positive
    let numer = m
        .numer()
        .checked_mul(rise)
        .ok_or_else(|| Error::Overflow("scaled altitude cost".into()))?;
    Ok(Integer::div_ceil(&numer, m.denom()))
}

/// One node per non-obstacle pixel, arcs both ways to every 8-neighbour,
/// `sigma = 1` everywhere and `gamma` from [`altitude_cost`] with
/// `dh = h_head - h_tail`.
pub fn grid_from_altitude(map: &AltitudeMap, h0: i64, m_minus: Ratio<i64>, m_plus: Ratio<i64>) -> Result<Network> {
    if h0 >= 0 {
        return Err(invalid("h0 must be negative"));
    }
    if !(Ratio::from_integer(0) < m_minus && m_minus < m_plus) {
        return Err(invalid("slopes must satisfy 0 < m_minus < m_plus"));
    }
    if map.h.len() != map.width * map.height || map.width == 0 || map.height == 0 {
        return Err(invalid("altitude raster does not match its dimensions"));
    }
    map.check_pixels()?;
    if map.sources.is_empty() || map.sinks.is_empty() {
        return Err(invalid("altitude map needs at least one source and one sink"));
    }
    if (map.width * map.height) as u64 >= u32::MAX as u64 {
        return Err(Error::Overflow("grid node count".into()));
    }
    let w = map.width;
    let open = |x: usize, y: usize| !map.obstacles.contains(&(x, y));
    let mut nodes = Vec::new();
    let mut arcs = Vec::new();
    for y in 0..map.height {
        for x in 0..w {
            if !open(x, y) {
                continue;
            }
            nodes.push(pixel_node(w, x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= map.height as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if !open(nx, ny) {
                        continue;
                    }
                    let dh = map.altitude(nx, ny) - map.altitude(x, y);
                    arcs.push(ArcSpec {
                        tail: pixel_node(w, x, y),
                        head: pixel_node(w, nx, ny),
                        gamma: altitude_cost(dh, h0, m_minus, m_plus)?,
                        sigma: 1,
                    });
                }
            }
        }
    }
    let pick = |ps: &[(usize, usize)]| ps.iter().map(|&(x, y)| pixel_node(w, x, y)).collect::<Vec<_>>();
    let net = Network::new(nodes, arcs, pick(&map.sources), pick(&map.sinks))?;
    Ok(net.with_metadata(json!({
        "generator": "grid",
        "width": map.width,
        "height": map.height,
        "h0": h0,
        "m_minus": m_minus.to_string(),
        "m_plus": m_plus.to_string(),
        "sigma": 1,
        "node_id": "y * width + x + 1",
    })))
}

/// A generated small-world instance.
#[derive(Debug, Clone)]
pub struct SmallWorld {
    pub network: Network,
    pub source: NodeId,
    pub sink: NodeId,
    /// Generation attempts needed to obtain a connected graph.
    pub attempts: u32,
}

const SMALL_WORLD_ATTEMPTS: u32 = 1000;

/// Watts-Strogatz style network on nodes `1..=n`: a ring where every node
/// links to its `delta / 2` clockwise neighbours, each link rewired with
/// probability `beta` to a uniformly drawn new endpoint, and every link
/// present in both directions, giving `n * delta` directed arcs. Costs are
/// drawn uniformly from `1..=gamma_max` and `1..=sigma_max`. The source and
/// sink are the first two distinct nodes drawn after the costs.
///
/// Disconnected draws are discarded and regenerated from the same stream;
/// the number of attempts is kept in the metadata.
pub fn small_world(n: usize, delta: usize, beta: f64, gamma_max: i64, sigma_max: i64, seed: u64) -> Result<SmallWorld> {
    if n < 2 {
        return Err(invalid("small-world networks need at least 2 nodes"));
    }
    if delta == 0 || delta % 2 != 0 || delta >= n {
        return Err(invalid("delta must be even, positive and below n"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(invalid("beta must lie in [0, 1]"));
    }
    if gamma_max < 1 || sigma_max < 1 {
        return Err(invalid("gamma_max and sigma_max must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=SMALL_WORLD_ATTEMPTS {
        let links = ring_links(n, delta, beta, &mut rng);
        if !connected(n, &links) {
            continue;
        }
        let mut arcs: Vec<ArcSpec> = links
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .map(|(a, b)| ArcSpec::new(a as u32 + 1, b as u32 + 1, 0, 0))
            .collect();
        arcs.sort_by_key(|a| (a.tail, a.head));
        for a in &mut arcs {
            a.gamma = rng.gen_range(1..=gamma_max);
            a.sigma = rng.gen_range(1..=sigma_max);
        }
        let source = rng.gen_range(0..n);
        let sink = loop {
            let t = rng.gen_range(0..n);
            if t != source {
                break t;
            }
        };
        let (source, sink) = (NodeId(source as u32 + 1), NodeId(sink as u32 + 1));
        let network = Network::new((1..=n as u32).map(NodeId), arcs, [source], [sink])?.with_metadata(json!({
            "generator": "small_world",
            "n": n,
            "delta": delta,
            "beta": beta,
            "gamma_max": gamma_max,
            "sigma_max": sigma_max,
            "seed": seed,
            "stream": STREAM_ALGORITHM,
            "attempts": attempt,
            "arc_count": "n * delta directed arcs: n * delta / 2 ring links, each present as (i, j) and (j, i)",
            "cost_distribution": "independent uniform integers in 1..=gamma_max and 1..=sigma_max",
            "placement": "source and sink are the first two distinct uniform draws",
        }));
        return Ok(SmallWorld {
            network,
            source,
            sink,
            attempts: attempt,
        });
    }
    Err(invalid(format!(
        "no connected small-world graph within {SMALL_WORLD_ATTEMPTS} attempts"
    )))
}

/// Undirected links as `(a, b)` over `0..n`, no duplicates, no self-links.
fn ring_links(n: usize, delta: usize, beta: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut present = BTreeSet::new();
    let mut links = Vec::with_capacity(n * delta / 2);
    for i in 0..n {
        for k in 1..=delta / 2 {
            let j = (i + k) % n;
            links.push((i, j));
            present.insert(key(i, j));
        }
    }
    for link in &mut links {
        if !rng.gen_bool(beta) {
            continue;
        }
        let (i, j) = *link;
        let candidates: Vec<usize> = (0..n).filter(|&m| m != i && !present.contains(&key(i, m))).collect();
        if let Some(&m) = candidates.choose(rng) {
            present.remove(&key(i, j));
            present.insert(key(i, m));
            *link = (i, m);
        }
    }
    links
}

fn connected(n: usize, links: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in links {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if !seen[j] {
                seen[j] = true;
                count += 1;
                queue.push_back(j);
            }
        }
    }
    count == n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn fig2_path_costs() {
        let net = fig2_network();
        let p = |v: &[u32]| v.iter().map(|&i| NodeId(i)).collect::<Vec<_>>();
        assert_eq!(net.walk_cost(&p(&[1, 2, 4, 5])).unwrap(), (4, 2));
        assert_eq!(net.walk_cost(&p(&[1, 2, 3, 4, 5])).unwrap(), (3, 3));
        assert_eq!(net.arc(NodeId(2), NodeId(3)).unwrap().gamma, 1);
        assert_eq!(net.arc(NodeId(3), NodeId(4)).unwrap().sigma, 1);
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("2/5").unwrap(), r(2, 5));
        assert_eq!(parse_ratio("-6/4").unwrap(), r(-3, 2));
        assert_eq!(parse_ratio("3").unwrap(), r(3, 1));
        assert!(parse_ratio("0.4").is_err());
        assert!(parse_ratio("1/0").is_err());
    }

    #[test]
    fn altitude_cost_rule() {
        let (m1, m2) = (r(2, 5), r(9, 10));
        assert_eq!(altitude_cost(0, -30, m1, m2).unwrap(), 27);
        assert_eq!(altitude_cost(-40, -30, m1, m2).unwrap(), -4);
        assert_eq!(altitude_cost(-30, -30, m1, m2).unwrap(), 0);
        // ceil(0.9 * 31) = ceil(27.9)
        assert_eq!(altitude_cost(1, -30, m1, m2).unwrap(), 28);
        // ceil(0.4 * -3) = ceil(-1.2)
        assert_eq!(altitude_cost(-33, -30, m1, m2).unwrap(), -1);
        assert_eq!(altitude_cost(40, -30, m1, m2).unwrap(), 63);
    }

    #[test]
    fn flat_grid() {
        let mut map = AltitudeMap::flat(3, 2);
        map.sources.push((0, 0));
        map.sinks.push((2, 1));
        let net = grid_from_altitude(&map, -30, r(2, 5), r(9, 10)).unwrap();
        assert_eq!(net.len(), 6);
        // 3x2 king graph: 7 undirected adjacencies... counted directly
        let expected: usize = (0..6usize)
            .map(|k| {
                let (x, y) = (k % 3, k / 3);
                (0..6)
                    .filter(|&m: &usize| {
                        let (a, b) = (m % 3, m / 3);
                        m != k && x.abs_diff(a) <= 1 && y.abs_diff(b) <= 1
                    })
                    .count()
            })
            .sum();
        assert_eq!(net.arc_count(), expected);
        assert!(net.arcs().iter().all(|a| a.gamma == 27 && a.sigma == 1));
        assert_eq!(net.sinks(), vec![pixel_node(3, 2, 1)]);
        assert_eq!(node_pixel(3, NodeId(6)), (2, 1));
        let meta = net.metadata().unwrap();
        assert_eq!(meta["width"], 3);
    }

    #[test]
    fn grid_rejects_bad_parameters() {
        let mut map = AltitudeMap::flat(2, 2);
        assert!(grid_from_altitude(&map, -30, r(2, 5), r(9, 10)).is_err());
        map.sources.push((0, 0));
        map.sinks.push((1, 1));
        assert!(grid_from_altitude(&map, 5, r(2, 5), r(9, 10)).is_err());
        assert!(grid_from_altitude(&map, -30, r(9, 10), r(2, 5)).is_err());
        map.obstacles.insert((1, 1));
        assert!(grid_from_altitude(&map, -30, r(2, 5), r(9, 10)).is_err());
    }

    #[test]
    fn obstacles_remove_nodes() {
        let mut map = AltitudeMap::flat(3, 3);
        map.sources.push((0, 0));
        map.sinks.push((2, 2));
        map.obstacles.insert((1, 1));
        let net = grid_from_altitude(&map, -30, r(2, 5), r(9, 10)).unwrap();
        assert_eq!(net.len(), 8);
        assert!(!net.contains(pixel_node(3, 1, 1)));
    }

    #[test]
    fn pgm_round_trip() {
        let text = "P2\n# source 0 0\n# sink 2 1\n# obstacle 1 0\n3 2\n255\n0 -5 10\n7 8 -9\n";
        let map = AltitudeMap::from_pgm(text).unwrap();
        assert_eq!(map.altitude(1, 0), -5);
        assert_eq!(map.altitude(2, 1), -9);
        assert_eq!(map.sources, vec![(0, 0)]);
        assert!(map.obstacles.contains(&(1, 0)));
        assert_eq!(AltitudeMap::from_pgm(&map.to_pgm()).unwrap(), map);
        assert!(AltitudeMap::from_pgm("P5\n1 1\n1\n0").is_err());
        assert!(AltitudeMap::from_pgm("P2\n2 2\n9\n1 2 3").is_err());
        assert!(AltitudeMap::from_pgm("P2\n# sink 5 5\n1 1\n9\n0").is_err());
    }

    #[test]
    fn cones_peak_is_strict_local_max() {
        let map = AltitudeMap::cones(7, 7, &[(3, 3, 160)], 40);
        assert_eq!(map.altitude(3, 3), 160);
        assert_eq!(map.altitude(2, 2), 120);
        assert_eq!(map.altitude(0, 0), 40);
    }

    #[test]
    fn small_world_shape() {
        let sw = small_world(100, 4, 0.0, 50, 10, 7).unwrap();
        let net = &sw.network;
        assert_eq!(net.arc_count(), 400);
        assert!((0..net.len()).all(|i| net.out_arcs(i).len() == 4));
        let sw = small_world(100, 4, 0.15, 50, 10, 7).unwrap();
        assert_eq!(sw.network.arc_count(), 400);
        assert_ne!(sw.source, sw.sink);
        assert!(sw.network.arcs().iter().all(|a| (1..=50).contains(&a.gamma) && (1..=10).contains(&a.sigma)));
        let again = small_world(100, 4, 0.15, 50, 10, 7).unwrap();
        assert_eq!(again.network, sw.network);
        assert!(small_world(10, 3, 0.1, 5, 5, 1).is_err());
        assert!(small_world(10, 4, 1.5, 5, 5, 1).is_err());
        assert!(small_world(1, 2, 0.1, 5, 5, 1).is_err());
    }
}
