//! Feedback and observation rendering.

use serde::{Deserialize, Serialize};

use super::state::{InstanceName, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Receptacle,
    Object,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub name: InstanceName,
    pub kind: EntityKind,
}

/// Opening of the entity-listing sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewLead {
    /// "Looking quickly around you, you see ..."
    LookAround,
    /// "On the countertop 1, you see ..."
    On(InstanceName),
    /// "The cabinet 1 is open. In it, you see ..."
    InOpen(InstanceName),
}

/// A listing of what the agent can see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct View {
    pub lead: ViewLead,
    pub items: Vec<InstanceName>,
}

impl View {
    /// Rendered sentence, or `None` when a room overview has nothing to list.
    pub fn sentence(&self) -> Option<String> {
        let list = render_list(&self.items);
        match &self.lead {
            ViewLead::LookAround if self.items.is_empty() => None,
            ViewLead::LookAround => Some(format!("Looking quickly around you, you see {list}.")),
            ViewLead::On(r) => Some(format!("On the {r}, you see {list}.")),
            ViewLead::InOpen(r) => Some(format!("The {r} is open. In it, you see {list}.")),
        }
    }

    fn lead_entity(&self) -> Option<&InstanceName> {
        match &self.lead {
            ViewLead::LookAround => None,
            ViewLead::On(r) | ViewLead::InOpen(r) => Some(r),
        }
    }
}

/// `a x, a y, and a z`; `nothing` when empty.
pub fn render_list(items: &[InstanceName]) -> String {
    match items.len() {
        0 => "nothing".to_string(),
        1 => format!("a {}", items[0]),
        n => {
            let mut s = String::new();
            for (i, it) in items.iter().enumerate() {
                if i > 0 {
                    s.push_str(", ");
                }
                if i == n - 1 {
                    s.push_str("and ");
                }
                s.push_str("a ");
                s.push_str(&it.to_string());
            }
            s
        }
    }
}

/// What the environment says after an action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    /// Action confirmation, possibly empty.
    pub message: String,
    /// Entities named by `message`.
    pub mentions: Vec<InstanceName>,
    pub view: Option<View>,
}

impl Feedback {
    pub fn message(message: impl Into<String>, mentions: Vec<InstanceName>) -> Self {
        Feedback { message: message.into(), mentions, view: None }
    }

    pub fn nothing_happens() -> Self {
        Feedback::message("Nothing happens.", vec![])
    }

    /// Room overview shown at the start of an episode.
    pub fn initial(state: &WorldState) -> Self {
        let items = state
            .receptacles_in_display_order()
            .into_iter()
            .map(|id| state.receptacles[id].name.clone())
            .collect();
        Feedback { message: String::new(), mentions: vec![], view: Some(View { lead: ViewLead::LookAround, items }) }
    }

    pub fn text(&self) -> String {
        join_sentences(&self.message, self.view.as_ref().and_then(View::sentence))
    }
}

fn join_sentences(message: &str, view: Option<String>) -> String {
    match (message.is_empty(), view) {
        (true, Some(v)) => v,
        (true, None) => String::new(),
        (false, Some(v)) => format!("{message} {v}"),
        (false, None) => message.to_string(),
    }
}

/// Structured step record plus its text form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub message: String,
    /// Entities named by the message or the view lead; never masked.
    pub anchors: Vec<Entity>,
    pub view: Option<View>,
    /// Kinds of the listed view items, parallel to `view.items`.
    pub view_kinds: Vec<EntityKind>,
    pub text: String,
}

/// Builds the observation the agent sees for `feedback` in `state`.
pub fn render_observation(state: &WorldState, feedback: &Feedback) -> Observation {
    let kind_of = |n: &InstanceName| {
        if state.is_receptacle_name(n) {
            EntityKind::Receptacle
        } else {
            EntityKind::Object
        }
    };
    let mut anchors: Vec<Entity> = Vec::new();
    let mut push_anchor = |n: &InstanceName| {
        if !anchors.iter().any(|e| &e.name == n) {
            anchors.push(Entity { name: n.clone(), kind: kind_of(n) });
        }
    };
    for m in &feedback.mentions {
        push_anchor(m);
    }
    if let Some(lead) = feedback.view.as_ref().and_then(View::lead_entity) {
        push_anchor(lead);
    }
    let view_kinds = feedback
        .view
        .as_ref()
        .map(|v| v.items.iter().map(kind_of).collect())
        .unwrap_or_default();
    let mut obs = Observation {
        message: feedback.message.clone(),
        anchors,
        view: feedback.view.clone(),
        view_kinds,
        text: String::new(),
    };
    obs.rerender();
    obs
}

impl Observation {
    /// Opening observation of an episode.
    pub fn initial(state: &WorldState) -> Self {
        render_observation(state, &Feedback::initial(state))
    }

    fn rerender(&mut self) {
        self.text = join_sentences(&self.message, self.view.as_ref().and_then(View::sentence));
    }

    /// Every visible entity in order of appearance, without duplicates.
    pub fn entities(&self) -> Vec<Entity> {
        let mut out = self.anchors.clone();
        if let Some(v) = &self.view {
            for (name, kind) in v.items.iter().zip(&self.view_kinds) {
                if !out.iter().any(|e| &e.name == name) {
                    out.push(Entity { name: name.clone(), kind: *kind });
                }
            }
        }
        out
    }

    pub fn receptacles(&self) -> Vec<InstanceName> {
        self.of_kind(EntityKind::Receptacle)
    }

    pub fn objects(&self) -> Vec<InstanceName> {
        self.of_kind(EntityKind::Object)
    }

    fn of_kind(&self, kind: EntityKind) -> Vec<InstanceName> {
        self.entities().into_iter().filter(|e| e.kind == kind).map(|e| e.name).collect()
    }

    pub fn is_anchor(&self, name: &InstanceName) -> bool {
        self.anchors.iter().any(|e| &e.name == name)
    }

    /// Copy of the observation keeping only listed entities for which `keep`
    /// holds. Anchors always stay.
    pub fn retain(&self, mut keep: impl FnMut(&Entity) -> bool) -> Observation {
        let mut out = self.clone();
        if let Some(view) = &mut out.view {
            let mut items = Vec::new();
            let mut kinds = Vec::new();
            for (name, kind) in view.items.iter().zip(&self.view_kinds) {
                let e = Entity { name: name.clone(), kind: *kind };
                if self.is_anchor(name) || keep(&e) {
                    items.push(name.clone());
                    kinds.push(*kind);
                }
            }
            view.items = items;
            out.view_kinds = kinds;
        }
        out.rerender();
        out
    }
}
