use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use masim_core::agent::{
    Agent, AgentError, AgentState, Component, ComponentError, ComponentKind, CoordinatorError, EventFilter,
    GoalController, KnowledgeValue, Phase, RangePerception, SyncCoordinator, TraceMeta, WorldView,
};
use masim_core::env::{Entity, NoiseSpec, Rect, Sensing, Shape, SingleIntegratorModel, World2D};

fn world(seed: u64, noise: f64) -> World2D {
    let mut w = World2D::new(Rect::new([-50.0, -50.0], [50.0, 50.0]), 0.1, seed).unwrap();
    let model = Arc::new(SingleIntegratorModel::with_speed_limit(2.0, NoiseSpec::gaussian(noise)));
    for (id, x) in [(1, 0.0), (2, 3.0)] {
        w.add_entity(Entity::modeled(id, model.clone(), vec![x, 0.0], Shape::Disc { radius: 0.2 })).unwrap();
    }
    w
}

/// Counts its invocations and does nothing else.
struct Counter(Arc<AtomicUsize>, ComponentKind);

impl Component for Counter {
    type Output = ();
    fn kind(&self) -> ComponentKind {
        self.1
    }
    fn compute(&mut self, _: &WorldView<'_>) -> Result<(), ComponentError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Ok(())
    }
    fn update(&mut self, _: &mut AgentState, _: ()) -> Result<(), ComponentError> {
        Ok(())
    }
}

fn goal_agent(id: u32, goal: [f64; 2]) -> Agent {
    let mut a = Agent::new(id).bind_entity(id).with_component(GoalController::new());
    a.state_mut().knowledge.insert("goal", KnowledgeValue::Vector(goal.to_vec()));
    a
}

#[test]
fn listing_style_controller() {
    let mut w = World2D::new(Rect::new([-10.0, -10.0], [10.0, 10.0]), 1.0, 0).unwrap();
    let model = Arc::new(SingleIntegratorModel::new(
        masim_core::env::InputBound::symmetric(10.0),
        masim_core::env::InputBound::symmetric(10.0),
        NoiseSpec::none(),
    ));
    w.add_entity(Entity::modeled(1, model, vec![2.0, 0.0], Shape::Disc { radius: 0.1 })).unwrap();
    let mut c = SyncCoordinator::new(w, 0);
    c.add_agent(goal_agent(1, [5.0, 0.0])).unwrap();
    c.initialize().unwrap();
    c.step_once().unwrap();
    let s = c.agent(1).unwrap().state();
    assert_eq!(s.control_input, vec![3.0, 0.0]);
    assert_eq!(s.awareness.intent()[0].state, vec![5.0, 0.0]);
    assert_eq!(s.awareness.belief(), &[5.0, 0.0]);
}

#[test]
fn invocation_count() {
    let n = Arc::new(AtomicUsize::new(0));
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    for id in [1, 2] {
        c.add_agent(
            Agent::new(id)
                .with_component(Counter(n.clone(), ComponentKind::Controller))
                .with_component(Counter(n.clone(), ComponentKind::Custom)),
        )
        .unwrap();
    }
    c.initialize().unwrap();
    c.run(3).unwrap();
    assert_eq!(n.load(Ordering::SeqCst), 12);
    assert_eq!(c.summary().invocations, 12);
}

#[test]
fn uninitialized_run_is_a_setup_error() {
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    c.add_agent(goal_agent(1, [0.0, 0.0])).unwrap();
    assert!(matches!(c.run(1), Err(CoordinatorError::Agent(AgentError::NotInitialized(1)))));
}

#[test]
fn controller_rule() {
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    c.add_agent(Agent::new(1)).unwrap();
    assert!(matches!(c.initialize(), Err(CoordinatorError::Agent(AgentError::NoController(1)))));
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    c.add_agent(Agent::new(1).with_component(GoalController::new()).with_component(GoalController::new())).unwrap();
    assert!(matches!(c.initialize(), Err(CoordinatorError::Agent(AgentError::MultipleControllers(1)))));
}

#[test]
fn components_run_in_kind_order() {
    let a = Agent::new(1)
        .with_component(GoalController::new())
        .with_component(Counter(Arc::new(AtomicUsize::new(0)), ComponentKind::Risk))
        .with_component(RangePerception::new(Sensing::Omniscient));
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    c.add_agent(a).unwrap();
    c.initialize().unwrap();
    assert_eq!(c.agent(1).unwrap().component_names(), ["perception", "risk", "controller"]);
}

fn traced_run(seed: u64) -> Vec<u8> {
    let mut c = SyncCoordinator::new(world(seed, 0.3), seed);
    c.add_agent(goal_agent(1, [5.0, 5.0])).unwrap();
    c.add_agent(goal_agent(2, [-5.0, 1.0])).unwrap();
    c.initialize().unwrap();
    c.run(25).unwrap();
    let mut out = Vec::new();
    let meta = TraceMeta { seed, config_hash: "test".into(), scenario: "two".into() };
    c.trace().write_csv(&meta, &mut out).unwrap();
    out
}

#[test]
fn same_seed_same_bytes() {
    assert_eq!(traced_run(11), traced_run(11));
    assert_ne!(traced_run(11), traced_run(12));
}

#[test]
fn subscriptions() {
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    c.add_agent(goal_agent(1, [1.0, 1.0])).unwrap();
    c.add_agent(goal_agent(2, [1.0, 1.0])).unwrap();
    let post = Arc::new(AtomicUsize::new(0));
    let order = Arc::new(Mutex::new(Vec::new()));
    let p = post.clone();
    let sub = c.bus().subscribe(
        EventFilter::all().phase(Phase::PostCompute).agent(1).kind(ComponentKind::Controller),
        move |_| {
            p.fetch_add(1, Ordering::SeqCst);
        },
    );
    for tag in ["first", "second"] {
        let o = order.clone();
        c.bus().subscribe(EventFilter::all().phase(Phase::PostUpdate).agent(2), move |_| o.lock().unwrap().push(tag));
    }
    c.initialize().unwrap();
    c.run(2).unwrap();
    sub.unsubscribe();
    c.run(3).unwrap();
    assert_eq!(post.load(Ordering::SeqCst), 2);
    assert_eq!(order.lock().unwrap()[..2], ["first", "second"]);
    assert_eq!(order.lock().unwrap().len(), 10);
}

#[test]
fn panicking_callback_does_not_abort() {
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    c.add_agent(goal_agent(1, [1.0, 1.0])).unwrap();
    c.bus().subscribe(EventFilter::all().phase(Phase::PostUpdate), |_| panic!("subscriber bug"));
    c.initialize().unwrap();
    c.run(4).unwrap();
    assert_eq!(c.summary().steps, 4);
    assert_eq!(c.bus().callback_failures(), 4);
}

#[test]
fn phase_order_and_payload() {
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    c.add_agent(goal_agent(1, [4.0, 0.0])).unwrap();
    let log = Arc::new(Mutex::new(Vec::new()));
    let l = log.clone();
    c.bus().subscribe(EventFilter::all(), move |e| {
        if e.phase == Phase::PostCompute {
            let cmd = e.payload.unwrap().downcast_ref::<masim_core::agent::GoalCommand>().unwrap();
            assert_eq!(cmd.goal, vec![4.0, 0.0]);
        }
        l.lock().unwrap().push((e.step, e.phase));
    });
    c.initialize().unwrap();
    c.run(3).unwrap();
    let phases: Vec<Phase> = log.lock().unwrap().iter().map(|(_, p)| *p).collect();
    let cycle = [Phase::PreCompute, Phase::PostCompute, Phase::PreUpdate, Phase::PostUpdate];
    assert_eq!(phases[..2], [Phase::PreInit, Phase::PostInit]);
    for chunk in phases[2..].chunks(4) {
        assert_eq!(chunk, cycle);
    }
}

struct Failing;

impl Component for Failing {
    type Output = ();
    fn kind(&self) -> ComponentKind {
        ComponentKind::Risk
    }
    fn compute(&mut self, _: &WorldView<'_>) -> Result<(), ComponentError> {
        Err(ComponentError::failed("sensor offline"))
    }
    fn update(&mut self, state: &mut AgentState, _: ()) -> Result<(), ComponentError> {
        state.awareness.set_risk(1.0)?;
        Ok(())
    }
}

#[test]
fn compute_failure_leaves_state_untouched() {
    let mut c = SyncCoordinator::new(world(1, 0.0), 1);
    c.add_agent(goal_agent(1, [1.0, 1.0]).with_component(Failing)).unwrap();
    let errors = Arc::new(AtomicUsize::new(0));
    let e2 = errors.clone();
    c.bus().subscribe(EventFilter::all().phase(Phase::ComponentError), move |e| {
        assert!(e.error.is_some());
        e2.fetch_add(1, Ordering::SeqCst);
    });
    c.initialize().unwrap();
    c.run(3).unwrap();
    assert_eq!(errors.load(Ordering::SeqCst), 3);
    assert_eq!(c.agent(1).unwrap().state().awareness.risk(), 0.0);
    assert_eq!(c.summary().component_failures, 3);
}

#[test]
fn perception_fills_others() {
    let mut w = world(1, 0.0);
    w.add_entity(Entity::obstacle(9, [0.0, 4.0], Shape::Disc { radius: 0.5 })).unwrap();
    w.add_entity(Entity::obstacle(10, [30.0, 30.0], Shape::Disc { radius: 0.5 })).unwrap();
    let mut c = SyncCoordinator::new(w, 1);
    c.add_agent(goal_agent(1, [0.0, 0.0]).with_component(RangePerception::new(Sensing::Omniscient))).unwrap();
    c.initialize().unwrap();
    c.run(1).unwrap();
    assert_eq!(c.agent(1).unwrap().state().others.len(), 3);
}
