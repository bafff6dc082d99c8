//! Function-based access control.
//!
//! Authorizations are kept as a three-dimensional tensor over
//! (subject, object segment, function). Unset cells default to the full
//! function universe; policies only ever remove functions from that base.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::types::{Label, ObjectId, SegmentId, UserId};

#[derive(Debug, Error)]
pub enum FbacError {
    #[error("catalog schema error: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("duplicate object `{0}`")]
    DuplicateObject(ObjectId),
    #[error("object `{object}` declares segment `{segment}` twice")]
    DuplicateSegment { object: ObjectId, segment: SegmentId },
    #[error("object `{object}` uses undeclared label `{label}`")]
    UnknownLabel { object: ObjectId, label: Label },
    #[error("unknown object `{0}`")]
    UnknownObject(ObjectId),
    #[error("object `{object}` has no segment `{segment}`")]
    UnknownSegment { object: ObjectId, segment: SegmentId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Function {
    View,
    Search,
    Copy,
    Paste,
    Email,
    Print,
}

impl Function {
    pub const ALL: [Function; 6] =
        [Function::View, Function::Search, Function::Copy, Function::Paste, Function::Email, Function::Print];

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Function::View => "view",
            Function::Search => "search",
            Function::Copy => "copy",
            Function::Paste => "paste",
            Function::Email => "email",
            Function::Print => "print",
        };
        f.write_str(name)
    }
}

/// A subset of the function universe.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FunctionSet(u8);

impl FunctionSet {
    pub const EMPTY: FunctionSet = FunctionSet(0);
    const MASK: u8 = 0b11_1111;

    pub const fn universe() -> Self {
        FunctionSet(Self::MASK)
    }

    /// Builds a set from its bit representation; bits outside the universe are rejected.
    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits & !Self::MASK == 0).then_some(FunctionSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, function: Function) -> bool {
        self.0 & function.bit() != 0
    }

    pub fn insert(&mut self, function: Function) {
        self.0 |= function.bit();
    }

    pub fn union(self, other: FunctionSet) -> FunctionSet {
        FunctionSet(self.0 | other.0)
    }

    pub fn intersection(self, other: FunctionSet) -> FunctionSet {
        FunctionSet(self.0 & other.0)
    }

    pub fn difference(self, other: FunctionSet) -> FunctionSet {
        FunctionSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: FunctionSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_universe(self) -> bool {
        self.0 == Self::MASK
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = Function> {
        Function::ALL.into_iter().filter(move |f| self.contains(*f))
    }
}

impl FromIterator<Function> for FunctionSet {
    fn from_iter<I: IntoIterator<Item = Function>>(iter: I) -> Self {
        let mut set = FunctionSet::EMPTY;
        for f in iter {
            set.insert(f);
        }
        set
    }
}

impl<const N: usize> From<[Function; N]> for FunctionSet {
    fn from(functions: [Function; N]) -> Self {
        functions.into_iter().collect()
    }
}

impl fmt::Debug for FunctionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl Serialize for FunctionSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for FunctionSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let functions = Vec::<Function>::deserialize(deserializer)?;
        Ok(functions.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub id: SegmentId,
    #[serde(default)]
    pub labels: BTreeSet<Label>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataObject {
    pub id: ObjectId,
    pub segments: Vec<Segment>,
}

impl DataObject {
    /// Union of the labels of every segment.
    pub fn labels(&self) -> BTreeSet<Label> {
        self.segments.iter().flat_map(|s| s.labels.iter().cloned()).collect()
    }

    pub fn segment(&self, id: &SegmentId) -> Option<&Segment> {
        self.segments.iter().find(|s| &s.id == id)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogDoc {
    labels: Vec<Label>,
    objects: Vec<DataObject>,
}

/// The object catalog: every object the file server can hand out, split into segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    labels: BTreeSet<Label>,
    objects: BTreeMap<ObjectId, DataObject>,
}

impl Catalog {
    pub fn new(
        labels: impl IntoIterator<Item = Label>,
        objects: impl IntoIterator<Item = DataObject>,
    ) -> Result<Self, FbacError> {
        let labels: BTreeSet<Label> = labels.into_iter().collect();
        let mut map = BTreeMap::new();
        for object in objects {
            let mut seen = BTreeSet::new();
            for segment in &object.segments {
                if !seen.insert(&segment.id) {
                    return Err(FbacError::DuplicateSegment { object: object.id.clone(), segment: segment.id.clone() });
                }
                if let Some(label) = segment.labels.iter().find(|l| !labels.contains(*l)) {
                    return Err(FbacError::UnknownLabel { object: object.id.clone(), label: label.clone() });
                }
            }
            if map.contains_key(&object.id) {
                return Err(FbacError::DuplicateObject(object.id));
            }
            map.insert(object.id.clone(), object);
        }
        Ok(Catalog { labels, objects: map })
    }

    pub fn from_json(doc: &str) -> Result<Self, FbacError> {
        let doc: CatalogDoc = serde_json::from_str(doc)?;
        Catalog::new(doc.labels, doc.objects)
    }

    pub fn to_json(&self) -> String {
        let doc = CatalogDoc {
            labels: self.labels.iter().cloned().collect(),
            objects: self.objects.values().cloned().collect(),
        };
        serde_json::to_string_pretty(&doc).expect("catalog serializes")
    }

    pub fn get(&self, id: &ObjectId) -> Result<&DataObject, FbacError> {
        self.objects.get(id).ok_or_else(|| FbacError::UnknownObject(id.clone()))
    }

    pub fn labels(&self) -> &BTreeSet<Label> {
        &self.labels
    }

    pub fn objects(&self) -> impl Iterator<Item = &DataObject> {
        self.objects.values()
    }
}

/// Which segments of an object a restriction applies to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentSelector {
    All,
    Segment(SegmentId),
    Label(Label),
}

impl SegmentSelector {
    pub fn matches(&self, segment: &Segment) -> bool {
        match self {
            SegmentSelector::All => true,
            SegmentSelector::Segment(id) => &segment.id == id,
            SegmentSelector::Label(label) => segment.labels.contains(label),
        }
    }
}

type Cell = (UserId, ObjectId, SegmentId);

/// Subject x segment x function authorization store.
///
/// Values are immutable: [`restrict`](Self::restrict) returns a new version and
/// leaves `self` untouched, so snapshots can be shared freely.
#[derive(Debug, Clone)]
pub struct AccessControlTensor {
    catalog: Arc<Catalog>,
    cells: Arc<BTreeMap<Cell, FunctionSet>>,
}

impl AccessControlTensor {
    pub fn new(catalog: Arc<Catalog>) -> Self {
        AccessControlTensor { catalog, cells: Arc::new(BTreeMap::new()) }
    }

    /// Allow-list constructor: every listed cell is seeded with exactly the given functions.
    pub fn with_allowed<I>(catalog: Arc<Catalog>, grants: I) -> Result<Self, FbacError>
    where
        I: IntoIterator<Item = (UserId, ObjectId, SegmentSelector, FunctionSet)>,
    {
        let mut cells = BTreeMap::new();
        for (subject, object_id, selector, functions) in grants {
            let object = catalog.get(&object_id)?;
            for segment in select(object, &selector)? {
                cells.insert((subject.clone(), object_id.clone(), segment.id.clone()), functions);
            }
        }
        Ok(AccessControlTensor { catalog, cells: Arc::new(cells) })
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    /// Functions `subject` may invoke on one segment; unset cells yield the universe.
    pub fn allowed(&self, subject: &UserId, object: &ObjectId, segment: &SegmentId) -> FunctionSet {
        // Avoid allocating a key for the common all-default case.
        if self.cells.is_empty() {
            return FunctionSet::universe();
        }
        self.cells.get(&(subject.clone(), object.clone(), segment.clone())).copied().unwrap_or(FunctionSet::universe())
    }

    /// Removes `functions` from every selected segment of `object` for `subject`.
    pub fn restrict(
        &self,
        subject: &UserId,
        object_id: &ObjectId,
        selector: &SegmentSelector,
        functions: FunctionSet,
    ) -> Result<Self, FbacError> {
        let object = self.catalog.get(object_id)?;
        let selected = select(object, selector)?;
        if functions.is_empty() {
            return Ok(self.clone());
        }
        let mut cells = (*self.cells).clone();
        for segment in selected {
            let current = self.allowed(subject, object_id, &segment.id);
            cells.insert((subject.clone(), object_id.clone(), segment.id.clone()), current.difference(functions));
        }
        Ok(AccessControlTensor { catalog: Arc::clone(&self.catalog), cells: Arc::new(cells) })
    }

    /// One entry per segment of `object`, in catalog order.
    pub fn render_view(
        &self,
        subject: &UserId,
        object_id: &ObjectId,
    ) -> Result<BTreeMap<SegmentId, FunctionSet>, FbacError> {
        let object = self.catalog.get(object_id)?;
        Ok(object.segments.iter().map(|s| (s.id.clone(), self.allowed(subject, object_id, &s.id))).collect())
    }
}

fn select<'a>(object: &'a DataObject, selector: &SegmentSelector) -> Result<Vec<&'a Segment>, FbacError> {
    if let SegmentSelector::Segment(id) = selector {
        if object.segment(id).is_none() {
            return Err(FbacError::UnknownSegment { object: object.id.clone(), segment: id.clone() });
        }
    }
    Ok(object.segments.iter().filter(|s| selector.matches(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catalog() -> Arc<Catalog> {
        let seg = |id: &str, labels: &[&str]| Segment {
            id: SegmentId::from(id),
            labels: labels.iter().map(|l| Label::from(*l)).collect(),
        };
        Arc::new(
            Catalog::new(
                ["top-secret", "war-related", "sensitive"].map(Label::from),
                [DataObject {
                    id: "F1".into(),
                    segments: vec![
                        seg("p1", &["war-related"]),
                        seg("p2", &["top-secret", "war-related"]),
                        seg("p3", &["top-secret"]),
                        seg("p4", &[]),
                    ],
                }],
            )
            .unwrap(),
        )
    }

    fn user() -> UserId {
        UserId::from("ua")
    }

    fn f1() -> ObjectId {
        ObjectId::from("F1")
    }

    #[test]
    fn unset_cell_defaults_to_universe() {
        let tensor = AccessControlTensor::new(catalog());
        assert_eq!(tensor.allowed(&user(), &f1(), &"p1".into()), FunctionSet::universe());
        assert_eq!(FunctionSet::universe().len(), 6);
    }

    #[test]
    fn restricting_copy_removes_only_copy() {
        let tensor = AccessControlTensor::new(catalog())
            .restrict(&user(), &f1(), &SegmentSelector::All, [Function::Copy].into())
            .unwrap();
        let allowed = tensor.allowed(&user(), &f1(), &"p3".into());
        assert_eq!(allowed, FunctionSet::universe().difference([Function::Copy].into()));
        assert!(!allowed.contains(Function::Copy));
        assert_eq!(allowed.len(), 5);
    }

    #[test]
    fn empty_restriction_is_identity() {
        let base = AccessControlTensor::new(catalog());
        let after = base.restrict(&user(), &f1(), &SegmentSelector::All, FunctionSet::EMPTY).unwrap();
        assert_eq!(base.render_view(&user(), &f1()).unwrap(), after.render_view(&user(), &f1()).unwrap());
    }

    #[test]
    fn label_restriction_touches_only_labelled_segments() {
        let tensor = AccessControlTensor::new(catalog())
            .restrict(
                &user(),
                &f1(),
                &SegmentSelector::Label("top-secret".into()),
                [Function::Print, Function::Email].into(),
            )
            .unwrap();
        let view = tensor.render_view(&user(), &f1()).unwrap();
        let stripped = FunctionSet::universe().difference([Function::Print, Function::Email].into());
        assert_eq!(view[&SegmentId::from("p1")], FunctionSet::universe());
        assert_eq!(view[&SegmentId::from("p2")], stripped);
        assert_eq!(view[&SegmentId::from("p3")], stripped);
        assert_eq!(view[&SegmentId::from("p4")], FunctionSet::universe());
    }

    #[test]
    fn unknown_object_and_segment_are_errors() {
        let tensor = AccessControlTensor::new(catalog());
        assert!(matches!(
            tensor.restrict(&user(), &"F9".into(), &SegmentSelector::All, [Function::Copy].into()),
            Err(FbacError::UnknownObject(_))
        ));
        assert!(matches!(tensor.render_view(&user(), &"F9".into()), Err(FbacError::UnknownObject(_))));
        assert!(matches!(
            tensor.restrict(&user(), &f1(), &SegmentSelector::Segment("p9".into()), [Function::Copy].into()),
            Err(FbacError::UnknownSegment { .. })
        ));
    }

    #[test]
    fn allow_list_constructor_seeds_cells() {
        let tensor = AccessControlTensor::with_allowed(
            catalog(),
            [(user(), f1(), SegmentSelector::Label("top-secret".into()), [Function::View].into())],
        )
        .unwrap();
        assert_eq!(tensor.allowed(&user(), &f1(), &"p2".into()), FunctionSet::from([Function::View]));
        assert_eq!(tensor.allowed(&user(), &f1(), &"p1".into()), FunctionSet::universe());
        assert_eq!(tensor.allowed(&"ub".into(), &f1(), &"p2".into()), FunctionSet::universe());
    }

    #[test]
    fn catalog_rejects_bad_documents() {
        let dup = r#"{"labels":[],"objects":[{"id":"A","segments":[{"id":"s"},{"id":"s"}]}]}"#;
        assert!(matches!(Catalog::from_json(dup), Err(FbacError::DuplicateSegment { .. })));
        let label = r#"{"labels":[],"objects":[{"id":"A","segments":[{"id":"s","labels":["x"]}]}]}"#;
        assert!(matches!(Catalog::from_json(label), Err(FbacError::UnknownLabel { .. })));
        let obj = r#"{"labels":[],"objects":[{"id":"A","segments":[]},{"id":"A","segments":[]}]}"#;
        assert!(matches!(Catalog::from_json(obj), Err(FbacError::DuplicateObject(_))));
        assert!(matches!(Catalog::from_json("{"), Err(FbacError::Schema(_))));
    }

    #[test]
    fn function_set_serializes_as_names() {
        let set = FunctionSet::from([Function::Email, Function::View]);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"["view","email"]"#);
        assert_eq!(serde_json::from_str::<FunctionSet>(&json).unwrap(), set);
        assert!(FunctionSet::from_bits(0b100_0000).is_none());
    }

    /// restrict(A); restrict(B) == restrict(A | B), checked over all 2^6 x 2^6 pairs.
    #[test]
    fn sequential_restriction_equals_union_exhaustively() {
        let base = AccessControlTensor::new(catalog());
        let selector = SegmentSelector::Label("top-secret".into());
        for a in 0u8..64 {
            for b in 0u8..64 {
                let a = FunctionSet::from_bits(a).unwrap();
                let b = FunctionSet::from_bits(b).unwrap();
                let seq = base
                    .restrict(&user(), &f1(), &selector, a)
                    .and_then(|t| t.restrict(&user(), &f1(), &selector, b))
                    .unwrap();
                let once = base.restrict(&user(), &f1(), &selector, a.union(b)).unwrap();
                assert_eq!(seq.render_view(&user(), &f1()).unwrap(), once.render_view(&user(), &f1()).unwrap());
            }
        }
    }

    fn selector_strategy() -> impl Strategy<Value = SegmentSelector> {
        prop_oneof![
            Just(SegmentSelector::All),
            prop::sample::select(vec!["p1", "p2", "p3", "p4"]).prop_map(|s| SegmentSelector::Segment(s.into())),
            prop::sample::select(vec!["top-secret", "war-related", "sensitive"])
                .prop_map(|l| SegmentSelector::Label(l.into())),
        ]
    }

    fn restriction_log() -> impl Strategy<Value = Vec<(u8, SegmentSelector, u8)>> {
        prop::collection::vec((0u8..3, selector_strategy(), 0u8..64), 0..12)
    }

    const USERS: [&str; 3] = ["ua", "ub", "uc"];

    proptest! {
        #![proptest_config(ProptestConfig { cases: 256, rng_seed: proptest::test_runner::RngSeed::Fixed(7), ..ProptestConfig::default() })]

        /// Folding the log by hand over a plain map gives the same view as the tensor.
        #[test]
        fn allowed_matches_naive_replay(log in restriction_log()) {
            let catalog = catalog();
            let mut tensor = AccessControlTensor::new(Arc::clone(&catalog));
            for (u, selector, bits) in &log {
                tensor = tensor.restrict(&USERS[*u as usize].into(), &f1(), selector, FunctionSet::from_bits(*bits).unwrap()).unwrap();
            }
            let object = catalog.get(&f1()).unwrap();
            for user in USERS {
                for segment in &object.segments {
                    let mut bits = 0b11_1111u8;
                    for (u, selector, removed) in &log {
                        if USERS[*u as usize] == user && selector.matches(segment) {
                            bits &= !removed;
                        }
                    }
                    prop_assert_eq!(tensor.allowed(&user.into(), &f1(), &segment.id).bits(), bits);
                }
            }
        }

        #[test]
        fn restriction_is_monotone_commutative_and_idempotent(
            start in restriction_log(),
            selector in selector_strategy(),
            a in 0u8..64,
            b in 0u8..64,
        ) {
            let mut base = AccessControlTensor::new(catalog());
            for (u, sel, bits) in &start {
                base = base.restrict(&USERS[*u as usize].into(), &f1(), sel, FunctionSet::from_bits(*bits).unwrap()).unwrap();
            }
            let (a, b) = (FunctionSet::from_bits(a).unwrap(), FunctionSet::from_bits(b).unwrap());
            let u = user();
            let ab = base.restrict(&u, &f1(), &selector, a).unwrap().restrict(&u, &f1(), &selector, b).unwrap();
            let ba = base.restrict(&u, &f1(), &selector, b).unwrap().restrict(&u, &f1(), &selector, a).unwrap();
            let aa = base.restrict(&u, &f1(), &selector, a).unwrap().restrict(&u, &f1(), &selector, a).unwrap();
            let a1 = base.restrict(&u, &f1(), &selector, a).unwrap();
            let before = base.render_view(&u, &f1()).unwrap();
            let view_ab = ab.render_view(&u, &f1()).unwrap();
            prop_assert_eq!(&view_ab, &ba.render_view(&u, &f1()).unwrap());
            prop_assert_eq!(aa.render_view(&u, &f1()).unwrap(), a1.render_view(&u, &f1()).unwrap());
            for (segment, set) in &view_ab {
                prop_assert!(set.is_subset(before[segment]));
            }
        }

        #[test]
        fn render_view_matches_per_segment_allowed(log in restriction_log()) {
            let catalog = catalog();
            let mut tensor = AccessControlTensor::new(Arc::clone(&catalog));
            for (u, selector, bits) in &log {
                tensor = tensor.restrict(&USERS[*u as usize].into(), &f1(), selector, FunctionSet::from_bits(*bits).unwrap()).unwrap();
            }
            for user in USERS {
                let view = tensor.render_view(&user.into(), &f1()).unwrap();
                let object = catalog.get(&f1()).unwrap();
                prop_assert_eq!(view.len(), object.segments.len());
                for segment in &object.segments {
                    prop_assert_eq!(view[&segment.id], tensor.allowed(&user.into(), &f1(), &segment.id));
                }
            }
        }
    }
}
