use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use masim_core::agent::{
    Agent, AsyncConfig, AsyncCoordinator, AwarenessBroadcaster, CoordinatorError, EventFilter, Gate, GoalController,
    Inbox, KnowledgeValue, Phase,
};
use masim_core::comms::{Endpoint, InProcessHub, Transport};
use masim_core::env::{Entity, NoiseSpec, Rect, Shape, SingleIntegratorModel, World2D};

fn world() -> World2D {
    let mut w = World2D::new(Rect::new([-50.0, -50.0], [50.0, 50.0]), 0.1, 3).unwrap();
    let model = Arc::new(SingleIntegratorModel::with_speed_limit(1.0, NoiseSpec::none()));
    w.add_entity(Entity::modeled(1, model.clone(), vec![0.0, 0.0], Shape::Disc { radius: 0.2 })).unwrap();
    w.add_entity(Entity::modeled(2, model, vec![5.0, 0.0], Shape::Disc { radius: 0.2 })).unwrap();
    w
}

fn controller_agent(id: u32, gate: Gate) -> Agent {
    let mut a = Agent::new(id).bind_entity(id).with_gated_component(GoalController::new(), gate);
    a.state_mut().knowledge.insert("goal", KnowledgeValue::Vector(vec![2.0, 2.0]));
    a
}

#[test]
fn period_gate_rate() {
    let mut c = AsyncCoordinator::new(world(), 1);
    c.add_agent(controller_agent(1, Gate::Period(0.1))).unwrap();
    let report = c
        .run(AsyncConfig { wall_duration: Duration::from_secs(1), world_period: Some(0.05), ..AsyncConfig::default() })
        .unwrap();
    let n = report.iterations[&(1, "controller".to_string())];
    assert!((8..=12).contains(&n), "{n} iterations");
    assert!(report.world_steps > 0);
    assert!(report.agents[0].is_initialized());
}

#[test]
fn message_gate_without_messages_never_fires() {
    let hub = Arc::new(InProcessHub::default());
    let ep = Endpoint::new(1, hub.clone()).unwrap();
    let notify = ep.notifier().unwrap();
    let agent = controller_agent(1, Gate::Period(0.05)).with_gated_component(Inbox::new(ep), Gate::OnMessage(notify));
    let mut c = AsyncCoordinator::new(world(), 1);
    c.add_agent(agent).unwrap();
    let report = c
        .run(AsyncConfig { wall_duration: Duration::from_millis(300), world_period: None, ..AsyncConfig::default() })
        .unwrap();
    assert_eq!(report.iterations[&(1, "comm_receiver".to_string())], 0);
}

#[test]
fn message_gate_fires_on_delivery() {
    let hub: Arc<dyn Transport> = Arc::new(InProcessHub::default());
    let rx = Endpoint::new(2, hub.clone()).unwrap();
    let notify = rx.notifier().unwrap();
    let tx = Endpoint::new(1, hub.clone()).unwrap();
    let sender = controller_agent(1, Gate::Period(0.05)).with_gated_component(AwarenessBroadcaster::new(tx), Gate::Period(0.1));
    let receiver = controller_agent(2, Gate::Period(0.05)).with_gated_component(Inbox::new(rx), Gate::OnMessage(notify));
    let mut c = AsyncCoordinator::new(world(), 1);
    c.add_agent(sender).unwrap();
    c.add_agent(receiver).unwrap();
    let report = c
        .run(AsyncConfig { wall_duration: Duration::from_millis(600), world_period: Some(0.05), ..AsyncConfig::default() })
        .unwrap();
    assert!(report.iterations[&(2, "comm_receiver".to_string())] >= 1);
    assert!(report.agents[1].state().others.contains_key(&1));
}

#[test]
fn non_positive_period_rejected() {
    let mut c = AsyncCoordinator::new(world(), 1);
    c.add_agent(controller_agent(1, Gate::Period(0.0))).unwrap();
    assert!(matches!(c.run(AsyncConfig::default()), Err(CoordinatorError::Config(_))));
}

#[test]
fn per_component_phase_order() {
    let mut c = AsyncCoordinator::new(world(), 1);
    let hub = Arc::new(InProcessHub::default());
    let ep = Endpoint::new(1, hub).unwrap();
    c.add_agent(controller_agent(1, Gate::Period(0.01)).with_gated_component(AwarenessBroadcaster::new(ep), Gate::Period(0.013)))
        .unwrap();
    c.add_agent(controller_agent(2, Gate::Period(0.017))).unwrap();
    type PhaseLog = Arc<Mutex<BTreeMap<(u32, String), Vec<Phase>>>>;
    let log: PhaseLog = Arc::default();
    let l = log.clone();
    c.bus().subscribe(EventFilter::all(), move |e| {
        l.lock().unwrap().entry((e.agent_id, e.component.to_string())).or_default().push(e.phase);
    });
    c.run(AsyncConfig { wall_duration: Duration::from_millis(400), world_period: Some(0.02), ..AsyncConfig::default() })
        .unwrap();
    let cycle = [Phase::PreCompute, Phase::PostCompute, Phase::PreUpdate, Phase::PostUpdate];
    let log = log.lock().unwrap();
    assert_eq!(log.len(), 3);
    for phases in log.values() {
        assert_eq!(phases[..2], [Phase::PreInit, Phase::PostInit]);
        let body = &phases[2..];
        assert!(body.len() >= 4 * 5);
        for chunk in body.chunks(4) {
            assert_eq!(chunk, cycle);
        }
    }
}
