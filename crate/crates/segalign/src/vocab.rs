//! Action vocabulary with its verb/object decomposition.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Index of an action class.
pub type ActionId = usize;
/// Index of a verb class.
pub type VerbId = usize;
/// Index of an object class.
pub type ObjectId = usize;

/// The set of action classes, each factored into a `(verb, object)` pair.
///
/// Verb and object indices are assigned densely in order of first
/// appearance, so `verbs` spans `[0, V)` and `objects` spans `[0, O)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    actions: Vec<String>,
    verbs: Vec<String>,
    objects: Vec<String>,
    decomposition: Vec<(VerbId, ObjectId)>,
    background: Option<ActionId>,
    action_index: HashMap<String, ActionId>,
}

impl Vocab {
    /// Builds a vocabulary from `(action, verb, object)` triples.
    pub fn new<S: AsRef<str>>(entries: &[(S, S, S)], background: Option<&str>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Input("vocabulary has no actions".into()));
        }
        let mut actions = Vec::with_capacity(entries.len());
        let mut verbs: Vec<String> = Vec::new();
        let mut objects: Vec<String> = Vec::new();
        let mut verb_index: HashMap<String, VerbId> = HashMap::new();
        let mut object_index: HashMap<String, ObjectId> = HashMap::new();
        let mut action_index = HashMap::new();
        let mut decomposition = Vec::with_capacity(entries.len());

        for (action, verb, object) in entries {
            let (action, verb, object) = (action.as_ref(), verb.as_ref(), object.as_ref());
            for name in [action, verb, object] {
                if name.is_empty() || name.chars().any(char::is_whitespace) {
                    return Err(Error::Input(format!("invalid vocabulary name {name:?}")));
                }
            }
            if action_index.insert(action.to_string(), actions.len()).is_some() {
                return Err(Error::Input(format!("duplicate action {action:?}")));
            }
            actions.push(action.to_string());
            let v = *verb_index.entry(verb.to_string()).or_insert_with(|| {
                verbs.push(verb.to_string());
                verbs.len() - 1
            });
            let o = *object_index.entry(object.to_string()).or_insert_with(|| {
                objects.push(object.to_string());
                objects.len() - 1
            });
            decomposition.push((v, o));
        }

        let background = match background {
            Some(name) => Some(
                *action_index
                    .get(name)
                    .ok_or_else(|| Error::Input(format!("unknown background action {name:?}")))?,
            ),
            None => None,
        };

        Ok(Vocab {
            actions,
            verbs,
            objects,
            decomposition,
            background,
            action_index,
        })
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_verbs(&self) -> usize {
        self.verbs.len()
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn action_name(&self, action: ActionId) -> &str {
        &self.actions[action]
    }

    pub fn verb_name(&self, verb: VerbId) -> &str {
        &self.verbs[verb]
    }

    pub fn object_name(&self, object: ObjectId) -> &str {
        &self.objects[object]
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn action_index(&self, name: &str) -> Option<ActionId> {
        self.action_index.get(name).copied()
    }

    pub fn verb_of(&self, action: ActionId) -> VerbId {
        self.decomposition[action].0
    }

    pub fn object_of(&self, action: ActionId) -> ObjectId {
        self.decomposition[action].1
    }

    pub fn decomposition(&self, action: ActionId) -> (VerbId, ObjectId) {
        self.decomposition[action]
    }

    pub fn background(&self) -> Option<ActionId> {
        self.background
    }

    pub(crate) fn check_action(&self, action: ActionId) -> Result<()> {
        if action < self.actions.len() {
            Ok(())
        } else {
            Err(Error::Range {
                what: "action index",
                value: action,
                valid: format!("[0, {})", self.actions.len()),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn breakfastish() -> Vocab {
        Vocab::new(
            &[
                ("pour_milk", "pour", "milk"),
                ("pour_cereal", "pour", "cereal"),
                ("take_bowl", "take", "bowl"),
                ("SIL", "SIL", "SIL"),
            ],
            Some("SIL"),
        )
        .unwrap()
    }

    #[test]
    fn dense_verb_object_indices() {
        let vocab = breakfastish();
        assert_eq!(vocab.num_verbs(), 3);
        assert_eq!(vocab.num_objects(), 4);
        assert_eq!(vocab.decomposition(0), (0, 0));
        assert_eq!(vocab.decomposition(1), (0, 1));
        assert_eq!(vocab.decomposition(2), (1, 2));
        assert_eq!(vocab.background(), Some(3));
        assert_eq!(vocab.action_index("take_bowl"), Some(2));
    }

    #[test]
    fn rejects_duplicates_and_unknown_background() {
        assert!(Vocab::new(&[("a", "v", "o"), ("a", "v", "p")], None).is_err());
        assert!(Vocab::new(&[("a", "v", "o")], Some("bg")).is_err());
        assert!(Vocab::new::<&str>(&[], None).is_err());
    }
}
