//! Permissible actions and state transitions.

use super::action::Action;
use super::catalog::Affordances;
use super::render::{Feedback, View, ViewLead};
use super::state::{Location, ReceptacleId, WorldState};
use super::task::TaskSpec;

/// Every action whose preconditions hold in `state`.
///
/// Order: `go to` targets in display order, then actions at the current
/// receptacle, then `look`.
pub fn permissible_actions(state: &WorldState) -> Vec<Action> {
    let mut out = Vec::new();
    for rid in state.receptacles_in_display_order() {
        if state.agent_at != Some(rid) {
            out.push(Action::GoTo(state.receptacles[rid].name.clone()));
        }
    }
    if let Some(at) = state.agent_at {
        let r = &state.receptacles[at];
        match r.open {
            Some(false) => out.push(Action::Open(r.name.clone())),
            Some(true) => out.push(Action::Close(r.name.clone())),
            None => {}
        }
        let held = state.held();
        if r.is_accessible() && held.is_none() {
            for oid in state.contents(at) {
                let o = &state.objects[oid];
                if o.affordances.contains(Affordances::PICKUPABLE) {
                    out.push(Action::Take { object: o.name.clone(), from: r.name.clone() });
                }
            }
        }
        if let Some(oid) = held {
            let o = &state.objects[oid];
            if r.is_accessible() {
                out.push(Action::Put { object: o.name.clone(), into: r.name.clone() });
            }
            let pairs = [
                (Affordances::HEAT_SOURCE, Affordances::HEATABLE),
                (Affordances::COOL_SOURCE, Affordances::COOLABLE),
                (Affordances::CLEAN_SOURCE, Affordances::CLEANABLE),
            ];
            for (source, able) in pairs {
                if r.affordances.contains(source) && o.affordances.contains(able) {
                    let (object, with) = (o.name.clone(), r.name.clone());
                    out.push(match source {
                        Affordances::HEAT_SOURCE => Action::Heat { object, with },
                        Affordances::COOL_SOURCE => Action::Cool { object, with },
                        _ => Action::Clean { object, with },
                    });
                }
            }
        }
        if r.affordances.contains(Affordances::LIGHT_SOURCE) {
            out.push(Action::Use(r.name.clone()));
        }
    }
    out.push(Action::Look);
    out
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: WorldState,
    pub feedback: Feedback,
    pub done: bool,
}

/// Listing the agent gets when it arrives at or inspects `rid`.
fn receptacle_view(state: &WorldState, rid: ReceptacleId) -> Result<View, Feedback> {
    let r = &state.receptacles[rid];
    let items = || state.contents(rid).into_iter().map(|o| state.objects[o].name.clone()).collect();
    match r.open {
        Some(false) => Err(Feedback::message(format!("The {} is closed.", r.name), vec![r.name.clone()])),
        Some(true) => Ok(View { lead: ViewLead::InOpen(r.name.clone()), items: items() }),
        None => Ok(View { lead: ViewLead::On(r.name.clone()), items: items() }),
    }
}

/// Applies `action`. Non-permissible actions leave the state untouched and
/// answer "Nothing happens.".
pub fn step(state: &WorldState, task: &TaskSpec, action: &Action) -> StepOutcome {
    if !permissible_actions(state).contains(action) {
        return StepOutcome {
            state: state.clone(),
            feedback: Feedback::nothing_happens(),
            done: task.is_satisfied(state),
        };
    }
    let mut next = state.clone();
    let rid = |s: &WorldState, n| s.receptacle_id(n).expect("permissible action names a receptacle");
    let oid = |s: &WorldState, n| s.object_id(n).expect("permissible action names an object");
    let feedback = match action {
        Action::GoTo(r) => {
            let id = rid(&next, r);
            next.agent_at = Some(id);
            match receptacle_view(&next, id) {
                Ok(view) => Feedback { message: String::new(), mentions: vec![], view: Some(view) },
                Err(closed) => closed,
            }
        }
        Action::Open(r) => {
            let id = rid(&next, r);
            next.receptacles[id].open = Some(true);
            let view = receptacle_view(&next, id).expect("just opened");
            Feedback { message: String::new(), mentions: vec![], view: Some(view) }
        }
        Action::Close(r) => {
            let id = rid(&next, r);
            next.receptacles[id].open = Some(false);
            Feedback::message(format!("You close the {r}."), vec![r.clone()])
        }
        Action::Take { object, from } => {
            let id = oid(&next, object);
            next.objects[id].location = Location::Inventory;
            Feedback::message(
                format!("You pick up the {object} from the {from}."),
                vec![object.clone(), from.clone()],
            )
        }
        Action::Put { object, into } => {
            let id = oid(&next, object);
            next.objects[id].location = Location::In(rid(&next, into));
            Feedback::message(
                format!("You put the {object} in/on the {into}."),
                vec![object.clone(), into.clone()],
            )
        }
        Action::Heat { object, with } | Action::Cool { object, with } | Action::Clean { object, with } => {
            let id = oid(&next, object);
            let c = &mut next.objects[id].condition;
            let verb = match action {
                Action::Heat { .. } => {
                    c.heated = true;
                    c.cooled = false;
                    "heat"
                }
                Action::Cool { .. } => {
                    c.cooled = true;
                    c.heated = false;
                    "cool"
                }
                _ => {
                    c.cleaned = true;
                    "clean"
                }
            };
            Feedback::message(
                format!("You {verb} the {object} using the {with}."),
                vec![object.clone(), with.clone()],
            )
        }
        Action::Use(r) => {
            let id = rid(&next, r);
            next.receptacles[id].lit = true;
            Feedback::message(format!("You turn on the {r}."), vec![r.clone()])
        }
        Action::Look => match next.agent_at {
            None => {
                let mut fb = Feedback::initial(&next);
                fb.message = "You are in the middle of a room.".into();
                fb
            }
            Some(id) => {
                let name = next.receptacles[id].name.clone();
                let facing = format!("You are facing the {name}.");
                match receptacle_view(&next, id) {
                    Ok(view) => Feedback { message: facing, mentions: vec![name], view: Some(view) },
                    Err(closed) => Feedback::message(
                        format!("{facing} {}", closed.message),
                        vec![name],
                    ),
                }
            }
        },
    };
    next.step_count += 1;
    let done = task.is_satisfied(&next);
    StepOutcome { state: next, feedback, done }
}

/// Stateful wrapper pairing a world with its task.
#[derive(Debug, Clone)]
pub struct Env {
    pub state: WorldState,
    pub task: TaskSpec,
}

impl Env {
    pub fn new(state: WorldState, task: TaskSpec) -> Self {
        Env { state, task }
    }

    pub fn permissible(&self) -> Vec<Action> {
        permissible_actions(&self.state)
    }

    pub fn is_done(&self) -> bool {
        self.task.is_satisfied(&self.state)
    }

    pub fn step(&mut self, action: &Action) -> (Feedback, bool) {
        let out = step(&self.state, &self.task, action);
        self.state = out.state;
        (out.feedback, out.done)
    }
}
