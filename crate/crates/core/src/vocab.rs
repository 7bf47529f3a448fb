//! Symbols: the Therblig verbs, object vocabularies, tuples, sequences and
//! contact sets, together with their canonical text forms.
//!
//! Text forms:
//!
//! - tuple: `VERB:object` (`G:knife`), `-` for the null therblig
//! - sequence: tuples joined by `;` (`Re:knife;G:knife`), empty string for `[]`
//! - contact set: `[knife,bowl]`, `[]` when empty

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Index of an object class inside an [`ObjectVocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub usize);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The seven object-manipulation therbligs plus the null therblig.
///
/// The declaration order is the column order of the effect vectors used by
/// the losses (`Reach` = 0 ... `Hold` = 6); `Null` sorts last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum Verb {
    Reach,
    Move,
    Grasp,
    Release,
    Use,
    Orient,
    Hold,
    Null,
}

impl Verb {
    pub const ALL: [Verb; 8] = [
        Verb::Reach,
        Verb::Move,
        Verb::Grasp,
        Verb::Release,
        Verb::Use,
        Verb::Orient,
        Verb::Hold,
        Verb::Null,
    ];

    /// Every verb that takes an object, in effect-vector order.
    pub const ACTIVE: [Verb; 7] = [
        Verb::Reach,
        Verb::Move,
        Verb::Grasp,
        Verb::Release,
        Verb::Use,
        Verb::Orient,
        Verb::Hold,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Verb::Reach => "Re",
            Verb::Move => "M",
            Verb::Grasp => "G",
            Verb::Release => "R",
            Verb::Use => "U",
            Verb::Orient => "O",
            Verb::Hold => "H",
            Verb::Null => "-",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verb::Reach => "reach",
            Verb::Move => "move",
            Verb::Grasp => "grasp",
            Verb::Release => "release",
            Verb::Use => "use",
            Verb::Orient => "orient",
            Verb::Hold => "hold",
            Verb::Null => "null",
        }
    }

    pub fn from_code(code: &str) -> Result<Verb> {
        Verb::ALL
            .into_iter()
            .find(|v| v.code() == code)
            .ok_or_else(|| Error::UnknownVerb(code.to_owned()))
    }

    /// Column of this verb in the `|C| x 7` effect matrix; `None` for `Null`.
    pub fn effect_index(self) -> Option<usize> {
        match self {
            Verb::Null => None,
            v => Some(v as usize),
        }
    }

    pub fn is_null(self) -> bool {
        self == Verb::Null
    }
}

impl fmt::Display for Verb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl From<Verb> for &'static str {
    fn from(v: Verb) -> Self {
        v.code()
    }
}

impl TryFrom<String> for Verb {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Verb::from_code(&s)
    }
}

/// Ordered list of object class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct ObjectVocabulary {
    names: Vec<String>,
    index: HashMap<String, ObjectId>,
}

impl ObjectVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if name.trim().is_empty() {
                return Err(Error::EmptyObjectName(i));
            }
            if index.insert(name.clone(), ObjectId(i)).is_some() {
                return Err(Error::DuplicateObject(name.clone()));
            }
        }
        Ok(Self { names, index })
    }

    /// Synthetic vocabulary `object_00 .. object_{n-1}`.
    pub fn synthetic(size: usize) -> Result<Self> {
        let width = size.saturating_sub(1).to_string().len().max(2);
        Self::new((0..size).map(|i| format!("object_{i:0width$}")))
    }

    /// Parses either a JSON array of names or one name per line (blank lines
    /// and `#` comments ignored).
    pub fn from_text(text: &str) -> Result<Self> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('[') {
            let names: Vec<String> = serde_json::from_str(trimmed).map_err(|_| Error::Parse {
                what: "vocabulary",
                input: trimmed.chars().take(64).collect(),
            })?;
            return Self::new(names);
        }
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        (0..self.names.len()).map(ObjectId)
    }

    pub fn name(&self, id: ObjectId) -> Result<&str> {
        self.names
            .get(id.0)
            .map(String::as_str)
            .ok_or(Error::ObjectOutOfRange {
                index: id,
                size: self.len(),
            })
    }

    pub fn id(&self, name: &str) -> Result<ObjectId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownObject(name.to_owned()))
    }

    pub fn check(&self, id: ObjectId) -> Result<ObjectId> {
        if id.0 < self.len() {
            Ok(id)
        } else {
            Err(Error::ObjectOutOfRange {
                index: id,
                size: self.len(),
            })
        }
    }

    /// Number of `(verb, object)` categories including the null category.
    pub fn category_count(&self) -> usize {
        self.len() * Verb::ACTIVE.len() + 1
    }

    pub fn parse_therblig(&self, text: &str) -> Result<Therblig> {
        let text = text.trim();
        if text == Verb::Null.code() {
            return Ok(Therblig::NULL);
        }
        let (code, object) = text.split_once(':').ok_or_else(|| Error::Parse {
            what: "therblig tuple",
            input: text.to_owned(),
        })?;
        let verb = Verb::from_code(code.trim())?;
        if verb.is_null() {
            return Err(Error::NullWithObject);
        }
        Ok(Therblig::new(verb, self.id(object.trim())?))
    }

    pub fn format_therblig(&self, t: Therblig) -> Result<String> {
        match t.object() {
            None => Ok(Verb::Null.code().to_owned()),
            Some(o) => Ok(format!("{}:{}", t.verb().code(), self.name(o)?)),
        }
    }

    pub fn parse_sequence(&self, text: &str) -> Result<TherbligSequence> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(TherbligSequence::empty());
        }
        let steps = text
            .split(';')
            .map(|s| self.parse_therblig(s))
            .collect::<Result<Vec<_>>>()?;
        TherbligSequence::new(steps)
    }

    pub fn format_sequence(&self, seq: &TherbligSequence) -> Result<String> {
        let parts = seq
            .iter()
            .map(|&t| self.format_therblig(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(parts.join(";"))
    }

    pub fn parse_contact_set(&self, text: &str) -> Result<ContactSet> {
        let text = text.trim();
        let inner = text
            .strip_prefix('[')
            .and_then(|s| s.strip_suffix(']'))
            .ok_or_else(|| Error::Parse {
                what: "contact set",
                input: text.to_owned(),
            })?;
        inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| self.id(name))
            .collect()
    }

    pub fn format_contact_set(&self, set: &ContactSet) -> Result<String> {
        let names = set
            .iter()
            .map(|o| self.name(o))
            .collect::<Result<Vec<_>>>()?;
        Ok(format!("[{}]", names.join(",")))
    }

    /// All well-formed tuples over this vocabulary, null last.
    pub fn all_therbligs(&self) -> Vec<Therblig> {
        let mut out: Vec<Therblig> = self
            .ids()
            .flat_map(|o| Verb::ACTIVE.into_iter().map(move |v| Therblig::new(v, o)))
            .collect();
        out.push(Therblig::NULL);
        out
    }
}

impl TryFrom<Vec<String>> for ObjectVocabulary {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<ObjectVocabulary> for Vec<String> {
    fn from(v: ObjectVocabulary) -> Self {
        v.names
    }
}

/// A `(verb, object)` atom. The null therblig carries no object; every other
/// verb carries exactly one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTherblig")]
pub struct Therblig {
    verb: Verb,
    object: Option<ObjectId>,
}

#[derive(Deserialize)]
struct RawTherblig {
    verb: Verb,
    object: Option<ObjectId>,
}

impl TryFrom<RawTherblig> for Therblig {
    type Error = Error;

    fn try_from(raw: RawTherblig) -> Result<Self> {
        Therblig::from_parts(raw.verb, raw.object)
    }
}

impl Therblig {
    pub const NULL: Therblig = Therblig {
        verb: Verb::Null,
        object: None,
    };

    /// # Panics
    ///
    /// If `verb` is [`Verb::Null`]; use [`Therblig::NULL`] or
    /// [`Therblig::from_parts`] instead.
    pub fn new(verb: Verb, object: ObjectId) -> Self {
        assert!(!verb.is_null(), "Therblig::new called with the null verb");
        Self {
            verb,
            object: Some(object),
        }
    }

    pub fn from_parts(verb: Verb, object: Option<ObjectId>) -> Result<Self> {
        match (verb, object) {
            (Verb::Null, None) => Ok(Self::NULL),
            (Verb::Null, Some(_)) => Err(Error::NullWithObject),
            (v, None) => Err(Error::MissingObject(v.name())),
            (v, Some(o)) => Ok(Self::new(v, o)),
        }
    }

    pub fn verb(self) -> Verb {
        self.verb
    }

    pub fn object(self) -> Option<ObjectId> {
        self.object
    }

    pub fn is_null(self) -> bool {
        self.verb.is_null()
    }
}

/// A therblig sequence in canonical form: trailing null padding is dropped
/// on construction, and a null followed by a non-null step is rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TherbligSequence {
    steps: Vec<Therblig>,
}

impl TherbligSequence {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(steps: impl IntoIterator<Item = Therblig>) -> Result<Self> {
        let mut steps: Vec<Therblig> = steps.into_iter().collect();
        let content = steps.iter().rposition(|t| !t.is_null()).map_or(0, |i| i + 1);
        if let Some(i) = steps[..content].iter().position(|t| t.is_null()) {
            return Err(Error::NullInsideSequence(i));
        }
        steps.truncate(content);
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[Therblig] {
        &self.steps
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Therblig> {
        self.steps.iter()
    }

    /// Number of non-null steps.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Appends a step; pushing the null therblig is a no-op.
    pub fn push(&mut self, t: Therblig) {
        if !t.is_null() {
            self.steps.push(t);
        }
    }

    /// Steps padded with nulls up to `n` slots (never truncates).
    pub fn padded(&self, n: usize) -> Vec<Therblig> {
        let mut out = self.steps.clone();
        if out.len() < n {
            out.resize(n, Therblig::NULL);
        }
        out
    }

    pub fn check(&self, vocab: &ObjectVocabulary) -> Result<()> {
        for t in &self.steps {
            if let Some(o) = t.object() {
                vocab.check(o)?;
            }
        }
        Ok(())
    }
}

impl<'a> IntoIterator for &'a TherbligSequence {
    type Item = &'a Therblig;
    type IntoIter = std::slice::Iter<'a, Therblig>;

    fn into_iter(self) -> Self::IntoIter {
        self.steps.iter()
    }
}

/// Set of object classes in contact with the hands, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContactSet(SmallVec<[ObjectId; 4]>);

impl ContactSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, o: ObjectId) -> bool {
        self.0.binary_search(&o).is_ok()
    }

    /// Returns `false` if `o` was already present.
    pub fn insert(&mut self, o: ObjectId) -> bool {
        match self.0.binary_search(&o) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, o);
                true
            }
        }
    }

    /// Returns `false` if `o` was absent.
    pub fn remove(&mut self, o: ObjectId) -> bool {
        match self.0.binary_search(&o) {
            Ok(pos) => {
                self.0.remove(pos);
                true
            }
            Err(_) => false,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.0.iter().copied()
    }

    /// Size of the symmetric difference with `other`.
    pub fn distance(&self, other: &ContactSet) -> usize {
        let (mut i, mut j, mut d) = (0, 0, 0);
        let (a, b) = (&self.0, &other.0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    d += 1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    d += 1;
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        d + (a.len() - i) + (b.len() - j)
    }

    pub fn check(&self, vocab: &ObjectVocabulary) -> Result<()> {
        self.iter().try_for_each(|o| vocab.check(o).map(drop))
    }

    /// Dense `|C|` indicator vector.
    pub fn to_vector(&self, size: usize) -> Result<Vec<f64>> {
        let mut v = vec![0.0; size];
        for o in self.iter() {
            *v.get_mut(o.0).ok_or(Error::ObjectOutOfRange { index: o, size })? = 1.0;
        }
        Ok(v)
    }

    /// Every subset of the vocabulary, in bitmask order. Only sensible for
    /// small vocabularies.
    pub fn all_subsets(size: usize) -> Vec<ContactSet> {
        assert!(size < 20, "refusing to enumerate 2^{size} contact sets");
        (0u32..1 << size)
            .map(|mask| {
                (0..size)
                    .filter(|i| mask & (1 << i) != 0)
                    .map(ObjectId)
                    .collect()
            })
            .collect()
    }
}

impl FromIterator<ObjectId> for ContactSet {
    fn from_iter<I: IntoIterator<Item = ObjectId>>(iter: I) -> Self {
        let mut v: SmallVec<[ObjectId; 4]> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }
}

/// The object class held by each hand, if any.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HandContact {
    pub right: Option<ObjectId>,
    pub left: Option<ObjectId>,
}

impl HandContact {
    pub fn new(right: Option<ObjectId>, left: Option<ObjectId>) -> Self {
        Self { right, left }
    }

    /// Assigns the (at most two) members of `set` to the hands, lowest index
    /// to the right hand.
    pub fn from_set(set: &ContactSet) -> Result<Self> {
        if set.len() > 2 {
            return Err(Error::Invalid(format!(
                "{} objects in contact cannot be assigned to two hands",
                set.len()
            )));
        }
        let mut it = set.iter();
        Ok(Self {
            right: it.next(),
            left: it.next(),
        })
    }

    pub fn check(&self, vocab: &ObjectVocabulary) -> Result<()> {
        self.right.into_iter().chain(self.left).try_for_each(|o| vocab.check(o).map(drop))
    }
}

/// Union of the objects held by either hand.
pub fn hand_to_set(h: HandContact, vocab: &ObjectVocabulary) -> Result<ContactSet> {
    h.check(vocab)?;
    Ok(h.right.into_iter().chain(h.left).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kitchen() -> ObjectVocabulary {
        ObjectVocabulary::new(["knife", "bowl", "tomato"]).unwrap()
    }

    #[test]
    fn verb_codes_are_unique_and_null_sorts_last() {
        let mut codes: Vec<_> = Verb::ALL.iter().map(|v| v.code()).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), 8);
        assert_eq!(Verb::ALL.iter().max(), Some(&Verb::Null));
        for v in Verb::ALL {
            assert_eq!(Verb::from_code(v.code()).unwrap(), v);
        }
        assert!(Verb::from_code("X").is_err());
    }

    #[test]
    fn vocabulary_rejects_bad_names() {
        assert_eq!(
            ObjectVocabulary::new(Vec::<String>::new()),
            Err(Error::EmptyVocabulary)
        );
        assert_eq!(
            ObjectVocabulary::new(["a", "a"]),
            Err(Error::DuplicateObject("a".into()))
        );
        assert_eq!(ObjectVocabulary::new(["a", " "]), Err(Error::EmptyObjectName(1)));
    }

    #[test]
    fn vocabulary_from_text_accepts_lines_and_json() {
        let a = ObjectVocabulary::from_text("# objects\nknife\n\nbowl\ntomato\n").unwrap();
        let b = ObjectVocabulary::from_text(r#"["knife","bowl","tomato"]"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.id("bowl").unwrap(), ObjectId(1));
    }

    #[test]
    fn hand_to_set_examples() {
        let v = kitchen();
        let knife = v.id("knife").unwrap();
        let bowl = v.id("bowl").unwrap();
        assert_eq!(
            hand_to_set(HandContact::new(Some(knife), None), &v).unwrap(),
            [knife].into_iter().collect()
        );
        assert!(hand_to_set(HandContact::default(), &v).unwrap().is_empty());
        let both = hand_to_set(HandContact::new(Some(bowl), Some(bowl)), &v).unwrap();
        assert_eq!(both.len(), 1);
        assert!(both.contains(bowl));
        assert!(matches!(
            hand_to_set(HandContact::new(Some(ObjectId(9)), None), &v),
            Err(Error::ObjectOutOfRange { .. })
        ));
    }

    #[test]
    fn sequence_canonical_form() {
        let k = ObjectId(0);
        let seq = TherbligSequence::new([
            Therblig::new(Verb::Grasp, k),
            Therblig::NULL,
            Therblig::NULL,
        ])
        .unwrap();
        assert_eq!(seq.len(), 1);
        assert_eq!(seq.padded(3)[2], Therblig::NULL);
        assert_eq!(
            TherbligSequence::new([Therblig::NULL, Therblig::new(Verb::Move, k)]),
            Err(Error::NullInsideSequence(0))
        );
    }

    #[test]
    fn therblig_from_parts_enforces_object_presence() {
        assert_eq!(Therblig::from_parts(Verb::Null, None), Ok(Therblig::NULL));
        assert_eq!(
            Therblig::from_parts(Verb::Null, Some(ObjectId(0))),
            Err(Error::NullWithObject)
        );
        assert!(Therblig::from_parts(Verb::Grasp, None).is_err());
    }

    #[test]
    fn text_forms() {
        let v = kitchen();
        let seq = v.parse_sequence("Re:knife; G:knife;M:knife;R:knife").unwrap();
        assert_eq!(seq.len(), 4);
        assert_eq!(v.format_sequence(&seq).unwrap(), "Re:knife;G:knife;M:knife;R:knife");
        assert_eq!(v.parse_sequence("").unwrap(), TherbligSequence::empty());
        assert_eq!(v.parse_sequence("G:bowl;-;-").unwrap().len(), 1);
        assert!(v.parse_sequence("G:spoon").is_err());
        assert!(v.parse_sequence("-:knife").is_err());
        assert!(v.parse_sequence("Gknife").is_err());

        let set = v.parse_contact_set("[tomato, knife]").unwrap();
        assert_eq!(v.format_contact_set(&set).unwrap(), "[knife,tomato]");
        assert!(v.parse_contact_set("[]").unwrap().is_empty());
        assert!(v.parse_contact_set("knife").is_err());
    }

    #[test]
    fn contact_set_distance() {
        let a: ContactSet = [ObjectId(0), ObjectId(2)].into_iter().collect();
        let b: ContactSet = [ObjectId(2), ObjectId(3)].into_iter().collect();
        assert_eq!(a.distance(&b), 2);
        assert_eq!(a.distance(&a), 0);
        assert_eq!(ContactSet::new().distance(&b), 2);
        assert_eq!(ContactSet::all_subsets(3).len(), 8);
    }
}
