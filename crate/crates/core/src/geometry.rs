//! Interface points, the colored-line construction of triangles, element
//! distances and compatibility, and grouping of elements into contours.
//!
//! All positions are integer sites; elements are `ℓ₊`-measurable half-open intervals.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarse::{classify_intervals, eta_at, theta_from_eta, Classification, ThetaField};
use crate::error::{KacError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Triangle,
    Rectangle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Element {
    pub start: i64,
    pub end: i64,
    pub kind: ElementKind,
    /// `±1` for triangles, `0` for rectangles.
    pub sign: i8,
}

impl Element {
    pub fn triangle(start: i64, end: i64, sign: i8) -> Self {
        Self { start, end, kind: ElementKind::Triangle, sign }
    }

    pub fn rectangle(start: i64, end: i64) -> Self {
        Self { start, end, kind: ElementKind::Rectangle, sign: 0 }
    }

    pub fn len(&self) -> i64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0
    }

    pub fn is_triangle(&self) -> bool {
        self.kind == ElementKind::Triangle
    }

    pub fn contains_site(&self, x: i64) -> bool {
        self.start <= x && x < self.end
    }

    /// Integer points `{start, end−1}` of a triangle's basis.
    pub fn extremal(&self) -> [i64; 2] {
        [self.start, self.end - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Color {
    Red,
    Blue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterfacePoint {
    pub position: i64,
    pub color: Color,
    pub partner: usize,
    /// `−1` grows to the left, `+1` to the right.
    pub direction: i8,
}

/// Endpoints of every interface rectangle, in increasing position. Each point's
/// line grows away from its rectangle, into the phase whose sign its color shadows.
pub fn make_interface_points(class: &Classification, origin_block: i64, ellp: u64) -> Vec<InterfacePoint> {
    let ellp = ellp as i64;
    let mut pts = Vec::new();
    for r in class.interface_rectangles() {
        let left = if r.left_sign > 0 { Color::Red } else { Color::Blue };
        let right = if left == Color::Red { Color::Blue } else { Color::Red };
        let k = pts.len();
        pts.push(InterfacePoint { position: (origin_block + r.start) * ellp, color: left, partner: k + 1, direction: -1 });
        pts.push(InterfacePoint { position: (origin_block + r.end) * ellp, color: right, partner: k, direction: 1 });
    }
    pts
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriangleBuild {
    pub triangles: Vec<Element>,
    /// Colliding point pairs `(left, right)`, in event order.
    pub collisions: Vec<(usize, usize)>,
    pub canceled: Vec<usize>,
    /// Points never consumed (lines escaping `Λ`).
    pub survivors: Vec<usize>,
}

/// Event-driven line growth. Adjacent alive points of one color moving toward each
/// other meet at half their separation; ties go to the earliest time, then the
/// leftmost meeting point, then red.
pub fn build_triangles(points: &[InterfacePoint]) -> TriangleBuild {
    let mut alive = vec![true; points.len()];
    let mut lanes: [BTreeSet<(i64, usize)>; 2] = [BTreeSet::new(), BTreeSet::new()];
    let lane = |c: Color| c as usize;
    for (k, p) in points.iter().enumerate() {
        lanes[lane(p.color)].insert((p.position, k));
    }
    // (doubled time, doubled meeting point, color, left, right)
    type Event = Reverse<(i64, i64, Color, usize, usize)>;
    let mut heap: BinaryHeap<Event> = BinaryHeap::new();
    let push = |heap: &mut BinaryHeap<Event>, a: usize, b: usize| {
        let (pa, pb) = (&points[a], &points[b]);
        if pa.direction > 0 && pb.direction < 0 {
            heap.push(Reverse((pb.position - pa.position, pa.position + pb.position, pa.color, a, b)));
        }
    };
    for set in &lanes {
        let v: Vec<usize> = set.iter().map(|&(_, k)| k).collect();
        for w in v.windows(2) {
            push(&mut heap, w[0], w[1]);
        }
    }
    let neighbors = |set: &BTreeSet<(i64, usize)>, key: (i64, usize)| {
        let prev = set.range(..key).next_back().map(|&(_, k)| k);
        let next = set.range((std::ops::Bound::Excluded(key), std::ops::Bound::Unbounded)).next().map(|&(_, k)| k);
        (prev, next)
    };

    let mut out = TriangleBuild { triangles: Vec::new(), collisions: Vec::new(), canceled: Vec::new(), survivors: Vec::new() };
    let mut last_time = i64::MIN;
    while let Some(Reverse((t2, _, color, a, b))) = heap.pop() {
        if !alive[a] || !alive[b] {
            continue;
        }
        let set = &lanes[lane(color)];
        let (_, next) = neighbors(set, (points[a].position, a));
        if next != Some(b) {
            continue;
        }
        debug_assert!(t2 >= last_time);
        last_time = t2;
        out.collisions.push((a, b));
        let sign = if color == Color::Red { 1 } else { -1 };
        out.triangles.push(Element::triangle(points[a].position, points[b].position, sign));
        let mut removed = vec![a, b];
        for p in [points[a].partner, points[b].partner] {
            debug_assert!(alive[p], "partner of a colliding point is alive");
            out.canceled.push(p);
            removed.push(p);
        }
        for &k in &removed {
            let c = lane(points[k].color);
            let key = (points[k].position, k);
            let (prev, next) = neighbors(&lanes[c], key);
            lanes[c].remove(&key);
            alive[k] = false;
            if let (Some(p), Some(n)) = (prev, next) {
                push(&mut heap, p, n);
            }
        }
    }
    out.survivors = (0..points.len()).filter(|&k| alive[k]).collect();
    out
}

fn set_distance(a: (i64, i64), b: (i64, i64)) -> i64 {
    // closed integer intervals
    (b.0 - a.1).max(a.0 - b.1).max(0)
}

fn points_to_set(pts: [i64; 2], set: (i64, i64)) -> i64 {
    pts.iter().map(|&p| set_distance((p, p), set)).min().expect("two points")
}

/// Distance between elements: set distance for rectangles, distance between
/// extremal points for triangles, extremal points to set for mixed pairs.
pub fn distance_d(s1: &Element, s2: &Element) -> i64 {
    let closed = |e: &Element| (e.start, e.end - 1);
    match (s1.kind, s2.kind) {
        (ElementKind::Rectangle, ElementKind::Rectangle) => set_distance(closed(s1), closed(s2)),
        (ElementKind::Triangle, ElementKind::Triangle) => {
            let mut d = i64::MAX;
            for p in s1.extremal() {
                for q in s2.extremal() {
                    d = d.min((p - q).abs());
                }
            }
            d
        }
        (ElementKind::Triangle, ElementKind::Rectangle) => points_to_set(s1.extremal(), closed(s2)),
        (ElementKind::Rectangle, ElementKind::Triangle) => points_to_set(s2.extremal(), closed(s1)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    NotMeasurable(usize),
    BadSign(usize),
    ShortRectangle(usize),
    /// A `2ℓ₊` rectangle whose two blocks do not carry opposite `η`.
    TwoBlockRule(usize),
    TriangleDistance(usize, usize),
    RectangleDistance(usize, usize),
    Attachment(usize, usize),
}

/// All violated compatibility relations. `eta` (block index → η, with the
/// boundary value outside `Λ`) enables the `2ℓ₊` rectangle rule.
pub fn check_compatibility(elements: &[Element], ellp: u64, eta: Option<&dyn Fn(i64) -> i8>) -> Vec<Violation> {
    let l = ellp as i64;
    let mut v = Vec::new();
    for (k, e) in elements.iter().enumerate() {
        if e.start.rem_euclid(l) != 0 || e.end.rem_euclid(l) != 0 || e.is_empty() {
            v.push(Violation::NotMeasurable(k));
        }
        match e.kind {
            ElementKind::Triangle if e.sign.abs() != 1 => v.push(Violation::BadSign(k)),
            ElementKind::Rectangle if e.sign != 0 => v.push(Violation::BadSign(k)),
            ElementKind::Rectangle if e.len() < 2 * l => v.push(Violation::ShortRectangle(k)),
            ElementKind::Rectangle if e.len() == 2 * l => {
                if let Some(eta) = eta {
                    let h = e.start.div_euclid(l);
                    if eta(h) * eta(h + 1) != -1 {
                        v.push(Violation::TwoBlockRule(k));
                    }
                }
            }
            _ => {}
        }
    }
    for i in 0..elements.len() {
        for j in i + 1..elements.len() {
            let (a, b) = (&elements[i], &elements[j]);
            let d = distance_d(a, b);
            match (a.kind, b.kind) {
                (ElementKind::Triangle, ElementKind::Triangle) => {
                    if d < a.len().min(b.len()) {
                        v.push(Violation::TriangleDistance(i, j));
                    }
                }
                (ElementKind::Rectangle, ElementKind::Rectangle) => {
                    if d < l {
                        v.push(Violation::RectangleDistance(i, j));
                    }
                }
                _ => {
                    let (t, q) = if a.is_triangle() { (a, b) } else { (b, a) };
                    let disjoint = q.end <= t.start || t.end <= q.start;
                    let inside = t.start <= q.start && q.end <= t.end;
                    if !((disjoint && d >= 1) || (inside && d >= l)) {
                        v.push(Violation::Attachment(i, j));
                    }
                }
            }
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    pub elements: Vec<Element>,
    /// Smallest interval `[start, end)` containing every element.
    pub envelope: (i64, i64),
    /// `Σ|S|/ℓ₊`.
    pub size: f64,
}

impl Contour {
    fn from_elements(mut elements: Vec<Element>, ellp: u64) -> Self {
        elements.sort();
        let start = elements.iter().map(|e| e.start).min().expect("nonempty");
        let end = elements.iter().map(|e| e.end).max().expect("nonempty");
        let size = elements.iter().map(|e| e.len() as f64).sum::<f64>() / ellp as f64;
        Self { elements, envelope: (start, end), size }
    }

    /// Some element contains site `x`.
    pub fn covers(&self, x: i64) -> bool {
        self.elements.iter().any(|e| e.contains_site(x))
    }
}

/// Minimum element distance between two contours.
pub fn contour_distance(a: &Contour, b: &Contour) -> i64 {
    let mut d = i64::MAX;
    for x in &a.elements {
        for y in &b.elements {
            d = d.min(distance_d(x, y));
        }
    }
    d
}

/// Smallest integer `ϖ` with `ϖ m_β² > 10`.
pub fn default_varpi(m_beta: f64) -> f64 {
    (10.0 / (m_beta * m_beta)).floor() + 1.0
}

/// The separation relation between groups: `D ≤ ϖℓ₊ min(|Γ|³, |Γ′|³)` means "too close".
pub fn too_close(d: i64, size_a: f64, size_b: f64, varpi: f64, ellp: u64) -> bool {
    (d as f64) <= varpi * ellp as f64 * size_a.powi(3).min(size_b.powi(3))
}

/// Agglomerates elements until every pair of groups is separated.
pub fn group_contours(elements: &[Element], varpi: f64, ellp: u64) -> Vec<Contour> {
    group_with(elements, varpi, ellp, None)
}

/// Same fixpoint, merging candidate pairs in a random order drawn from `seed`.
pub fn group_contours_shuffled(elements: &[Element], varpi: f64, ellp: u64, seed: u64) -> Vec<Contour> {
    group_with(elements, varpi, ellp, Some(seed))
}

fn group_with(elements: &[Element], varpi: f64, ellp: u64, seed: Option<u64>) -> Vec<Contour> {
    let n = elements.len();
    let dist: Vec<Vec<i64>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { 0 } else { distance_d(&elements[i], &elements[j]) }).collect()).collect();
    let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut sizes: Vec<f64> = elements.iter().map(|e| e.len() as f64 / ellp as f64).collect();
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    loop {
        let mut candidates = Vec::new();
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let d = groups[a].iter().flat_map(|&i| groups[b].iter().map(move |&j| (i, j))).map(|(i, j)| dist[i][j]).min();
                if too_close(d.expect("nonempty groups"), sizes[a], sizes[b], varpi, ellp) {
                    candidates.push((a, b));
                    if rng.is_none() {
                        break;
                    }
                }
            }
            if rng.is_none() && !candidates.is_empty() {
                break;
            }
        }
        let Some(&(a, b)) = (match rng.as_mut() {
            Some(r) => candidates.choose(r),
            None => candidates.first(),
        }) else {
            break;
        };
        let moved = groups.swap_remove(b);
        let s = sizes.swap_remove(b);
        groups[a].extend(moved);
        sizes[a] += s;
    }
    let mut out: Vec<Contour> =
        groups.into_iter().map(|g| Contour::from_elements(g.into_iter().map(|i| elements[i]).collect(), ellp)).collect();
    out.sort_by(|x, y| x.envelope.cmp(&y.envelope).then(x.elements.cmp(&y.elements)));
    out
}

/// Inverse of the forward construction on the blocks of `Λ` plus guards.
pub fn reconstruct_theta(
    elements: &[Element],
    n_blocks: usize,
    origin_block: i64,
    ellp: u64,
    outer: i8,
) -> Result<ThetaField> {
    let l = ellp as i64;
    let lo = (origin_block - 1) * l;
    let hi = (origin_block + n_blocks as i64 + 1) * l;
    for e in elements {
        if e.start.rem_euclid(l) != 0 || e.end.rem_euclid(l) != 0 || e.is_empty() {
            return Err(KacError::Unreachable(format!("element {e:?} is not ℓ₊-measurable")));
        }
        if e.start < lo || e.end > hi {
            return Err(KacError::Unreachable(format!("element {e:?} leaves the guarded domain [{lo}, {hi})")));
        }
        if e.is_triangle() && e.sign.abs() != 1 {
            return Err(KacError::Unreachable(format!("triangle {e:?} has no sign")));
        }
    }
    let mut values = Vec::with_capacity(n_blocks + 2);
    for k in -1..=n_blocks as i64 {
        let x = (origin_block + k) * l;
        let in_rect = elements.iter().filter(|e| !e.is_triangle() && e.contains_site(x)).count();
        if in_rect > 1 {
            return Err(KacError::Unreachable(format!("overlapping rectangles at site {x}")));
        }
        let v = if in_rect == 1 {
            0
        } else {
            elements
                .iter()
                .filter(|e| e.is_triangle() && e.contains_site(x))
                .min_by_key(|e| e.len())
                .map(|e| e.sign)
                .unwrap_or(outer)
        };
        values.push(v);
    }
    for w in values.windows(2) {
        if w[0] * w[1] == -1 {
            return Err(KacError::Unreachable("opposite phases touch without a rectangle".into()));
        }
    }
    for (i, a) in elements.iter().enumerate() {
        for b in &elements[i + 1..] {
            if !a.is_triangle() && !b.is_triangle() && (a.end == b.start || b.end == a.start) {
                return Err(KacError::Unreachable(format!("rectangles {a:?} and {b:?} are not maximal")));
            }
        }
    }
    Ok(ThetaField::from_extended(origin_block, outer, values))
}

/// Everything the forward construction produces for one `η` field.
#[derive(Debug, Clone)]
pub struct ContourExtraction {
    pub theta: ThetaField,
    pub classification: Classification,
    pub points: Vec<InterfacePoint>,
    pub build: TriangleBuild,
    pub elements: Vec<Element>,
    pub contours: Vec<Contour>,
}

/// `η → Θ → rectangles + triangles → contours`.
pub fn extract_contours(eta: &[i8], origin_block: i64, outer: i8, ellp: u64, varpi: f64) -> ContourExtraction {
    let theta = theta_from_eta(eta, origin_block, outer);
    let classification = classify_intervals(&theta);
    let points = make_interface_points(&classification, origin_block, ellp);
    let build = build_triangles(&points);
    let l = ellp as i64;
    let mut elements: Vec<Element> = build.triangles.clone();
    elements.extend(
        classification.rectangles.iter().map(|r| Element::rectangle((origin_block + r.start) * l, (origin_block + r.end) * l)),
    );
    elements.sort();
    let contours = group_contours(&elements, varpi, ellp);
    ContourExtraction { theta, classification, points, build, elements, contours }
}

/// `η` lookup by absolute block index, with `outer` off `Λ`.
pub fn eta_lookup<'a>(eta: &'a [i8], origin_block: i64, outer: i8) -> impl Fn(i64) -> i8 + 'a {
    move |b| eta_at(eta, outer, b - origin_block)
}

/// One JSON object per contour, newline separated.
pub fn contour_report(contours: &[Contour]) -> String {
    let mut s = String::new();
    for c in contours {
        s.push_str(&serde_json::to_string(c).expect("serializable"));
        s.push('\n');
    }
    s
}
