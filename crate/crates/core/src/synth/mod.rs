//! Synthetic cluttered tabletop scenes.
//!
//! Geometry is 2.5-D: every object has a rectangular footprint on the table
//! plane, a height, and a support (the table, on top of another object, or
//! inside a container). Supports form a forest rooted at the table.
//! Ground-truth predicates and failure causes are derived from this geometry
//! by fixed rules, and each object is projected to an image bounding box.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{
    is_adverse_attribute, AttributeVocabulary, BoundingBox2D, FailureCause, FailureScenario, FailureType,
    NodeId, PredicateVocabulary, RelationTriple, SceneGraph, SceneNode, NO_ATTRIBUTE,
};
use crate::seed;

mod catalog;
mod corpus;

pub use catalog::{ObjectKind, Role, CATALOG};
pub use corpus::{build_corpus, corpus_to_json, load_corpus, parse_corpus, save_corpus, split_counts, Corpus, CorpusScene, Split};

const MAX_ATTEMPTS: usize = 200;
const MAX_CONTENTS: usize = 3;
const MAX_LOAD: usize = 2;
const MAX_COVERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub d: f64,
}

impl Footprint {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.d / 2.0)
    }

    fn overlaps(&self, other: &Footprint, margin: f64) -> bool {
        self.x < other.x + other.w + margin
            && other.x < self.x + self.w + margin
            && self.y < other.y + other.d + margin
            && other.y < self.y + self.d + margin
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Table,
    On(NodeId),
    In(NodeId),
}

impl Support {
    pub fn parent(&self) -> Option<NodeId> {
        match *self {
            Support::Table => None,
            Support::On(p) | Support::In(p) => Some(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacedObject {
    pub id: NodeId,
    pub label: String,
    pub attribute: String,
    pub footprint: Footprint,
    pub height: f64,
    /// Height of the object's base above the table, derived from its supports.
    pub elevation: f64,
    pub support: Support,
    pub is_container: bool,
    /// Only meaningful when `is_container` is set.
    pub container_open: bool,
}

/// Maps scene units to pixels: `x_px = origin_x + scale * x`,
/// `y_px = origin_y + scale * (y - tilt * (elevation + height))`,
/// `w_px = scale * w`, `h_px = scale * (d + tilt * height)`.
/// `tilt` is the vertical foreshortening of heights (1 is a side-on view).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Camera {
    pub scale: f64,
    /// Relative jitter bound applied to each box dimension.
    pub jitter: f64,
    pub tilt: f64,
    pub origin_x: f64,
    pub origin_y: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            scale: 4.0,
            jitter: 0.03,
            tilt: 0.5,
            origin_x: 20.0,
            origin_y: 320.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Inclusive bounds on the number of objects per scene.
    pub object_count_range: (usize, usize),
    /// Inclusive bounds on the number of derived triples per scene.
    pub relation_target_range: (usize, usize),
    /// Expected fraction of objects carrying an attribute other than `none`.
    pub attribute_rate: f64,
    pub near_threshold: f64,
    pub close_threshold: f64,
    /// Probability that a closable container is closed.
    pub closed_container_rate: f64,
    pub table_width: f64,
    pub table_depth: f64,
    pub camera: Camera,
    pub rng_seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            object_count_range: (8, 18),
            relation_target_range: (20, 40),
            attribute_rate: 0.4,
            near_threshold: 22.0,
            close_threshold: 12.0,
            closed_container_rate: 0.5,
            table_width: 120.0,
            table_depth: 80.0,
            camera: Camera::default(),
            rng_seed: 0,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let (lo, hi) = self.object_count_range;
        if lo < 2 || lo > hi {
            return bad(format!("object_count_range {lo}..={hi} must satisfy 2 <= lo <= hi"));
        }
        if hi > CATALOG.len() {
            return bad(format!("object_count_range upper bound {hi} exceeds catalog size {}", CATALOG.len()));
        }
        let (rlo, rhi) = self.relation_target_range;
        if rlo > rhi {
            return bad(format!("relation_target_range {rlo}..={rhi} is empty"));
        }
        if !(self.close_threshold > 0.0 && self.close_threshold < self.near_threshold && self.near_threshold.is_finite()) {
            return bad(format!(
                "thresholds must satisfy 0 < close_threshold ({}) < near_threshold ({})",
                self.close_threshold, self.near_threshold
            ));
        }
        for (name, p) in [
            ("attribute_rate", self.attribute_rate),
            ("closed_container_rate", self.closed_container_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} must lie in [0, 1]"));
            }
        }
        if !(self.table_width > 0.0 && self.table_depth > 0.0) {
            return bad("table dimensions must be positive".into());
        }
        let c = &self.camera;
        if !(c.scale > 0.0 && c.scale.is_finite()) || !(0.0..=0.05).contains(&c.jitter) || !(0.0..=1.0).contains(&c.tilt) {
            return bad("camera needs scale > 0, jitter in [0, 0.05] and tilt in [0, 1]".into());
        }
        if c.origin_x < 0.0 || c.origin_y < 0.0 {
            return bad("camera origin must be non-negative".into());
        }
        Ok(())
    }

    fn affinity_probability(&self) -> f64 {
        let with = CATALOG.iter().filter(|k| k.affinity.is_some()).count() as f64;
        (self.attribute_rate * CATALOG.len() as f64 / with).min(1.0)
    }
}

/// A desired object paired with its failure causes.
type Candidate = (NodeId, Vec<FailureCause>);

/// Generates one scene and its failure scenario. Deterministic in `(config, seed)`.
///
/// The desired object is drawn by first picking a failure type uniformly
/// among those present in the scene, then an object of that type. Objects
/// whose causes mix attribute and spatial kinds are never chosen.
pub fn generate_scene(config: &GeneratorConfig, seed: u64) -> Result<(Vec<PlacedObject>, FailureScenario)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rlo, rhi) = config.relation_target_range;
    let mut last_count = None;
    let mut saw_pickable_only = false;
    for _ in 0..MAX_ATTEMPTS {
        let objects = place_objects(config, &mut rng);
        let triples = derive_predicates(&objects, config);
        let box_seed: u64 = rng.gen();
        if triples.len() < rlo || triples.len() > rhi {
            last_count = Some(triples.len());
            continue;
        }
        let mut by_type: Vec<(FailureType, Vec<Candidate>)> =
            FailureType::ALL.iter().map(|t| (*t, Vec::new())).collect();
        for obj in &objects {
            let causes = derive_failure_causes(&objects, &triples, obj.id)?;
            let spatial = causes.iter().filter(|c| c.is_spatial()).count();
            if causes.is_empty() || (spatial > 0 && spatial < causes.len()) {
                continue;
            }
            let ty = FailureType::classify(&causes).expect("non-empty");
            by_type.iter_mut().find(|(t, _)| *t == ty).unwrap().1.push((obj.id, causes));
        }
        by_type.retain(|(_, c)| !c.is_empty());
        if by_type.is_empty() {
            saw_pickable_only = true;
            continue;
        }
        let (_, candidates) = by_type.swap_remove(rng.gen_range(0..by_type.len()));
        let (desired, causes) = candidates[rng.gen_range(0..candidates.len())].clone();
        let graph = to_graph(&objects, triples, &config.camera, box_seed)?;
        let scenario = FailureScenario::new(graph, desired, causes)?;
        return Ok((objects, scenario));
    }
    let detail = match last_count {
        Some(n) if !saw_pickable_only => format!(
            "relation_target_range {rlo}..={rhi} unreachable after {MAX_ATTEMPTS} attempts (last scene had {n} triples)"
        ),
        _ => format!("no scene with a failing object within {MAX_ATTEMPTS} attempts"),
    };
    Err(Error::Generation(detail))
}

fn to_graph(objects: &[PlacedObject], triples: Vec<RelationTriple>, camera: &Camera, box_seed: u64) -> Result<SceneGraph> {
    let nodes = objects
        .iter()
        .map(|o| SceneNode {
            id: o.id,
            bbox: project_bbox(o, camera, seed::derive(box_seed, o.id as u64)),
            label: o.label.clone(),
            attribute: o.attribute.clone(),
        })
        .collect();
    SceneGraph::new(
        PredicateVocabulary::default(),
        AttributeVocabulary::default(),
        nodes,
        triples,
    )
    .validated()
}

fn place_objects(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<PlacedObject> {
    let (lo, hi) = config.object_count_range;
    let n = rng.gen_range(lo..=hi);
    let kinds: Vec<&ObjectKind> = CATALOG.choose_multiple(rng, n).collect();
    let p_attr = config.affinity_probability();

    let mut objects: Vec<PlacedObject> = kinds
        .iter()
        .enumerate()
        .map(|(i, kind)| {
            let attribute = match kind.affinity {
                Some(a) if rng.gen_bool(p_attr) => a,
                _ => NO_ATTRIBUTE,
            };
            let (is_container, container_open) = match kind.role {
                Role::Container { closable: true } => (true, !rng.gen_bool(config.closed_container_rate)),
                Role::Container { closable: false } => (true, true),
                _ => (false, false),
            };
            PlacedObject {
                id: i as NodeId,
                label: kind.label.to_string(),
                attribute: attribute.to_string(),
                footprint: Footprint {
                    x: 0.0,
                    y: 0.0,
                    w: kind.size.0,
                    d: kind.size.1,
                },
                height: kind.size.2,
                elevation: 0.0,
                support: Support::Table,
                is_container,
                container_open,
            }
        })
        .collect();

    assign_supports(&kinds, &mut objects, rng);
    place_geometry(config, &mut objects, rng);
    objects
}

fn fits(inner: &PlacedObject, outer: &PlacedObject) -> bool {
    inner.footprint.w <= outer.footprint.w && inner.footprint.d <= outer.footprint.d
}

fn assign_supports(kinds: &[&ObjectKind], objects: &mut [PlacedObject], rng: &mut ChaCha8Rng) {
    let n = objects.len();
    let ids_with = |pred: &dyn Fn(&ObjectKind) -> bool| -> Vec<usize> { (0..n).filter(|&i| pred(kinds[i])).collect() };
    let containers = ids_with(&|k| matches!(k.role, Role::Container { .. }));
    let smalls = ids_with(&|k| k.role == Role::Small);
    let covers = ids_with(&|k| k.role == Role::Cover);
    let bases = ids_with(&|k| k.role == Role::Base);
    let standalones = ids_with(&|k| k.role == Role::Standalone);
    let mut contents = vec![0usize; n];
    let mut load = vec![0usize; n];

    // Small containers into larger top-level containers.
    for &c in &containers {
        if !rng.gen_bool(0.3) {
            continue;
        }
        let hosts: Vec<usize> = containers
            .iter()
            .copied()
            .filter(|&h| {
                h != c
                    && objects[h].support == Support::Table
                    && contents[h] < MAX_CONTENTS
                    && contents[c] == 0
                    && fits(&objects[c], &objects[h])
                    && objects[c].footprint.w * objects[c].footprint.d < objects[h].footprint.w * objects[h].footprint.d
            })
            .collect();
        if let Some(&h) = hosts.choose(rng) {
            objects[c].support = Support::In(h as NodeId);
            contents[h] += 1;
        }
    }

    for &s in &smalls {
        if !rng.gen_bool(0.4) {
            continue;
        }
        let hosts: Vec<usize> = containers
            .iter()
            .copied()
            .filter(|&h| contents[h] < MAX_CONTENTS && fits(&objects[s], &objects[h]))
            .collect();
        if let Some(&h) = hosts.choose(rng) {
            objects[s].support = Support::In(h as NodeId);
            contents[h] += 1;
        }
    }

    for &c in &covers {
        if !rng.gen_bool(0.6) {
            continue;
        }
        let targets: Vec<usize> = smalls
            .iter()
            .copied()
            .filter(|&s| {
                load[s] < MAX_COVERS
                    && fits(&objects[s], &objects[c])
                    && match objects[s].support {
                        Support::In(h) => fits(&objects[c], &objects[h as usize]),
                        _ => true,
                    }
            })
            .collect();
        if let Some(&s) = targets.choose(rng) {
            objects[c].support = Support::On(s as NodeId);
            load[s] += 1;
        }
    }

    for &o in smalls.iter().chain(&standalones) {
        if objects[o].support != Support::Table || load[o] > 0 || !rng.gen_bool(0.3) {
            continue;
        }
        let targets: Vec<usize> = bases
            .iter()
            .copied()
            .filter(|&b| load[b] < MAX_LOAD && fits(&objects[o], &objects[b]))
            .collect();
        if let Some(&b) = targets.choose(rng) {
            objects[o].support = Support::On(b as NodeId);
            load[b] += 1;
        }
    }
}

fn depth(objects: &[PlacedObject], id: usize) -> usize {
    let mut d = 0;
    let mut cur = objects[id].support;
    while let Some(p) = cur.parent() {
        d += 1;
        cur = objects[p as usize].support;
    }
    d
}

/// Roots are placed without overlap, each reserving room for the covers
/// lying on it. Contents sit anywhere inside their container; objects on a
/// base sit within it, and covers are centered over what they cover.
fn place_geometry(config: &GeneratorConfig, objects: &mut [PlacedObject], rng: &mut ChaCha8Rng) {
    const COVER_SLACK: f64 = 4.0;
    let mut order: Vec<usize> = (0..objects.len()).collect();
    order.sort_by_key(|&i| (depth(objects, i), i));
    let mut reserved: Vec<Footprint> = Vec::new();
    for i in order {
        let (w, d) = (objects[i].footprint.w, objects[i].footprint.d);
        let (x, y, elevation) = match objects[i].support {
            Support::Table => {
                let (mut rw, mut rd) = (w, d);
                for c in objects.iter().filter(|c| c.support == Support::On(i as NodeId)) {
                    if c.footprint.w > w || c.footprint.d > d {
                        rw = rw.max(c.footprint.w + COVER_SLACK);
                        rd = rd.max(c.footprint.d + COVER_SLACK);
                    }
                }
                let max_x = (config.table_width - rw).max(0.0);
                let max_y = (config.table_depth - rd).max(0.0);
                let mut fp = Footprint { x: 0.0, y: 0.0, w: rw, d: rd };
                for _ in 0..60 {
                    fp.x = rng.gen_range(0.0..=max_x);
                    fp.y = rng.gen_range(0.0..=max_y);
                    if !reserved.iter().any(|r| r.overlaps(&fp, 1.0)) {
                        break;
                    }
                }
                reserved.push(fp);
                (fp.x + (rw - w) / 2.0, fp.y + (rd - d) / 2.0, 0.0)
            }
            Support::In(h) => {
                let host = &objects[h as usize];
                let x = host.footprint.x + rng.gen::<f64>() * (host.footprint.w - w);
                let y = host.footprint.y + rng.gen::<f64>() * (host.footprint.d - d);
                (x, y, host.elevation + 0.5)
            }
            Support::On(b) => {
                let base = &objects[b as usize];
                let fp = base.footprint;
                let along = |rng: &mut ChaCha8Rng, start: f64, room: f64| {
                    if room >= 0.0 {
                        start + rng.gen::<f64>() * room
                    } else {
                        start + room / 2.0 + rng.gen_range(-0.5..=0.5) * COVER_SLACK
                    }
                };
                let mut x = along(rng, fp.x, fp.w - w);
                let mut y = along(rng, fp.y, fp.d - d);
                // A cover over something in a container stays inside the container.
                if let Support::In(h) = base.support {
                    let outer = objects[h as usize].footprint;
                    x = x.clamp(outer.x, (outer.x + outer.w - w).max(outer.x));
                    y = y.clamp(outer.y, (outer.y + outer.d - d).max(outer.y));
                }
                (x.max(0.0), y.max(0.0), base.elevation + base.height)
            }
        };
        let obj = &mut objects[i];
        obj.footprint.x = x;
        obj.footprint.y = y;
        obj.elevation = elevation;
    }
}

fn center_distance(a: &PlacedObject, b: &PlacedObject) -> f64 {
    let (ax, ay) = a.footprint.center();
    let (bx, by) = b.footprint.center();
    (ax - bx).hypot(ay - by)
}

/// True when `a` sits, through at least one intermediate support, inside container `b`.
fn transitively_inside(objects: &[PlacedObject], a: usize, b: usize) -> bool {
    if !objects[b].is_container {
        return false;
    }
    let mut cur = objects[a].support;
    while let Some(p) = cur.parent() {
        if matches!(cur, Support::In(c) if c as usize == b) {
            return true;
        }
        cur = objects[p as usize].support;
    }
    false
}

/// Ground-truth predicates for every ordered pair, at most one per pair.
///
/// Rules, first match wins: `on`, `in`, `underneath` from direct supports;
/// `inside` for indirect containment; then `close_to` and `near` by center
/// distance (both boundaries inclusive).
pub fn derive_predicates(objects: &[PlacedObject], config: &GeneratorConfig) -> Vec<RelationTriple> {
    let mut triples = Vec::new();
    for (ai, a) in objects.iter().enumerate() {
        for (bi, b) in objects.iter().enumerate() {
            if ai == bi {
                continue;
            }
            let predicate = if a.support == Support::On(b.id) {
                "on"
            } else if a.support == Support::In(b.id) {
                "in"
            } else if b.support == Support::On(a.id) {
                "underneath"
            } else if transitively_inside(objects, ai, bi) {
                "inside"
            } else {
                let dist = center_distance(a, b);
                if dist <= config.close_threshold {
                    "close_to"
                } else if dist <= config.near_threshold {
                    "near"
                } else {
                    continue;
                }
            };
            triples.push(RelationTriple::new(a.id, predicate, b.id));
        }
    }
    triples
}

/// Why `desired` cannot be picked: occluding objects on top of it, closed
/// containers around it, and an adverse attribute. Spatial causes follow
/// triple order; the attribute cause comes last. Empty for a pickable object.
pub fn derive_failure_causes(
    objects: &[PlacedObject],
    triples: &[RelationTriple],
    desired: NodeId,
) -> Result<Vec<FailureCause>> {
    let by_id: HashMap<NodeId, &PlacedObject> = objects.iter().map(|o| (o.id, o)).collect();
    let d = by_id.get(&desired).ok_or(Error::UnknownNode(desired))?;
    let mut causes = Vec::new();
    for t in triples.iter().filter(|t| t.subject == desired) {
        let blocking = match t.predicate.as_str() {
            "underneath" => true,
            "in" | "inside" => by_id
                .get(&t.object)
                .map(|c| c.is_container && !c.container_open)
                .unwrap_or(false),
            _ => false,
        };
        if blocking {
            causes.push(FailureCause::Spatial(t.clone()));
        }
    }
    if is_adverse_attribute(&d.attribute) {
        causes.push(FailureCause::Attribute {
            node: desired,
            attribute: d.attribute.clone(),
        });
    }
    Ok(causes)
}

/// Projects an object to an image box (see [`Camera`]) and applies seeded
/// jitter: the origin moves by at most `jitter` of the box size and each
/// size is scaled by a factor in `[1 - jitter, 1 + jitter]`.
pub fn project_bbox(object: &PlacedObject, camera: &Camera, seed: u64) -> BoundingBox2D {
    let s = camera.scale;
    let fp = &object.footprint;
    let x = camera.origin_x + s * fp.x;
    let y = camera.origin_y + s * (fp.y - camera.tilt * (object.elevation + object.height));
    let w = s * fp.w;
    let h = s * (fp.d + camera.tilt * object.height);
    let (x, y, w, h) = if camera.jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = || rng.gen_range(-1.0..=1.0) * camera.jitter;
        let (ux, uy, uw, uh) = (u(), u(), u(), u());
        (x + ux * w, y + uy * h, w * (1.0 + uw), h * (1.0 + uh))
    } else {
        (x, y, w, h)
    };
    BoundingBox2D {
        x: x.max(0.0),
        y: y.max(0.0),
        w,
        h,
    }
}
