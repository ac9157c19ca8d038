use std::time::{Duration, Instant};

use simseek::agents::{
    build_cae_input, build_caf_input, build_cqg_answer_prompt, build_cqg_prior_prompt,
    scripted_agent, AgentEndpoint, AgentError, AgentResponse, PromptMeta, Role,
};
use simseek::corpus::{AnswerSpan, BackgroundInfo, Document};
use simseek::simulator::{run_batch, BatchAgents, Mode, SimulationConfig};
use simseek_server::{FaultPlan, MockAgentServer};

const PASSAGE: &str = "Thor Heyerdahl built a raft called Kon-Tiki in Peru. \
The crew sailed west across the Pacific for 101 days. \
They reached Raroia in the Tuamotu islands in August 1947.";

fn doc(id: &str) -> Document {
    Document::new(
        id,
        BackgroundInfo::new("Kon-Tiki expedition", "Voyage", "A 1947 raft journey.").unwrap(),
        PASSAGE,
    )
    .unwrap()
}

fn meta(t: usize) -> PromptMeta {
    PromptMeta {
        conv_id: "d1".into(),
        turn_index: t,
    }
}

fn endpoint(server: &MockAgentServer) -> AgentEndpoint {
    AgentEndpoint {
        retries: 2,
        timeout: Duration::from_secs(5),
        ..AgentEndpoint::remote(server.url())
    }
}

#[test]
fn all_roles_round_trip_like_scripted_agents() {
    let server = MockAgentServer::start(FaultPlan::default()).unwrap();
    let remote = endpoint(&server).connect().unwrap();
    let d = doc("d1");
    let target = AnswerSpan::at("Kon-Tiki", PASSAGE.find("Kon-Tiki").unwrap());
    let bundles = [
        build_cae_input(PASSAGE, None, meta(1)).with_top_k(3),
        build_cqg_answer_prompt(PASSAGE, &[], &target, meta(1)).unwrap(),
        build_cqg_prior_prompt(d.background(), &[], meta(1)),
        build_caf_input("How long did the crew sail west?", PASSAGE, &[], d.background(), meta(2)),
    ];
    let local = [
        scripted_agent("span-extractor").unwrap(),
        scripted_agent("template-questioner").unwrap(),
        scripted_agent("template-questioner").unwrap(),
        scripted_agent("lexical-answerer").unwrap(),
    ];
    for (bundle, agent) in bundles.iter().zip(&local) {
        let got = remote.invoke(bundle).unwrap();
        let want = agent.invoke(bundle).unwrap();
        assert_eq!(got, want, "role {}", bundle.role);
    }

    let requests = server.requests();
    let roles: Vec<Role> = requests.iter().map(|r| r.role).collect();
    assert_eq!(roles, Role::ALL);
    let cae = &requests[0];
    assert_eq!(cae.k, Some(3));
    assert_eq!(cae.context.as_deref(), Some(PASSAGE));
    assert_eq!(cae.generation.beam_size, 5);
    assert_eq!(cae.meta, meta(1));
    assert!(requests.iter().all(|r| !r.request_id.is_empty()));
}

#[test]
fn cae_reply_is_a_ranked_candidate_list() {
    let server = MockAgentServer::start(FaultPlan::default()).unwrap();
    let remote = endpoint(&server).connect().unwrap();
    let out = remote
        .invoke(&build_cae_input(PASSAGE, None, meta(1)).with_top_k(2))
        .unwrap();
    let AgentResponse::Candidates(set) = out else {
        panic!("expected candidates");
    };
    assert_eq!(set.k(), 2);
    assert!(set.len() <= 2 && !set.is_empty());
    assert!(set.spans().windows(2).all(|w| w[0].score >= w[1].score));
    assert!(set.spans().iter().all(|s| s.span.verify(PASSAGE)));
}

#[test]
fn transient_failures_are_retried() {
    let server = MockAgentServer::start(FaultPlan {
        fail_first: 2,
        ..FaultPlan::default()
    })
    .unwrap();
    let remote = endpoint(&server).connect().unwrap();
    let bundle = build_cqg_prior_prompt(doc("d1").background(), &[], meta(1));
    assert!(remote.invoke(&bundle).is_ok());
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn persistent_failures_become_transport_errors() {
    let server = MockAgentServer::start(FaultPlan {
        fail_first: 100,
        ..FaultPlan::default()
    })
    .unwrap();
    let remote = endpoint(&server).connect().unwrap();
    let bundle = build_cqg_prior_prompt(doc("d1").background(), &[], meta(1));
    let err = remote.invoke(&bundle).unwrap_err();
    assert!(matches!(err, AgentError::Transport(ref m) if m.contains("3 attempts")), "{err}");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn slow_agents_time_out() {
    let server = MockAgentServer::start(FaultPlan {
        delay: Duration::from_millis(400),
        ..FaultPlan::default()
    })
    .unwrap();
    let ep = AgentEndpoint {
        timeout: Duration::from_millis(100),
        retries: 1,
        ..AgentEndpoint::remote(server.url())
    };
    let remote = ep.connect().unwrap();
    let started = Instant::now();
    let err = remote
        .invoke(&build_cqg_prior_prompt(doc("d1").background(), &[], meta(1)))
        .unwrap_err();
    assert!(matches!(err, AgentError::Transport(ref m) if m.contains("timed out")), "{err}");
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[test]
fn malformed_replies_are_protocol_errors_without_retry() {
    let server = MockAgentServer::start(FaultPlan {
        malformed: true,
        ..FaultPlan::default()
    })
    .unwrap();
    let remote = endpoint(&server).connect().unwrap();
    let err = remote
        .invoke(&build_cqg_prior_prompt(doc("d1").background(), &[], meta(1)))
        .unwrap_err();
    assert!(matches!(err, AgentError::Protocol(_)), "{err}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn stale_request_ids_are_rejected() {
    let server = MockAgentServer::start(FaultPlan {
        wrong_request_id: true,
        ..FaultPlan::default()
    })
    .unwrap();
    let remote = endpoint(&server).connect().unwrap();
    let err = remote
        .invoke(&build_cqg_prior_prompt(doc("d1").background(), &[], meta(1)))
        .unwrap_err();
    assert!(matches!(err, AgentError::Protocol(ref m) if m.contains("does not match")), "{err}");
}

#[test]
fn remote_and_scripted_batches_agree() {
    let server = MockAgentServer::start(FaultPlan::default()).unwrap();
    let docs: Vec<Document> = (0..4).map(|i| doc(&format!("d{i}"))).collect();
    for mode in [Mode::Sym, Mode::Asym] {
        let config = SimulationConfig::semi_supervised(mode);
        let remote = endpoint(&server).connect().unwrap();
        let remote_agents = BatchAgents {
            questioner: remote.clone(),
            extractor: Some(remote.clone()),
            answerer: Some(remote),
        };
        let local_agents = BatchAgents {
            questioner: scripted_agent("template-questioner").unwrap(),
            extractor: Some(scripted_agent("span-extractor").unwrap()),
            answerer: Some(scripted_agent("lexical-answerer").unwrap()),
        };
        let a = run_batch(&docs, &config, &remote_agents, 2).unwrap();
        let b = run_batch(&docs, &config, &local_agents, 1).unwrap();
        assert_eq!(a.aborted, 0);
        assert_eq!(a.conversations, b.conversations);
    }
}

#[test]
fn agent_failures_abort_only_the_conversation() {
    let server = MockAgentServer::start(FaultPlan {
        malformed: true,
        ..FaultPlan::default()
    })
    .unwrap();
    let docs = vec![doc("d1"), doc("d2")];
    let remote = endpoint(&server).connect().unwrap();
    let agents = BatchAgents {
        questioner: remote.clone(),
        extractor: None,
        answerer: Some(remote),
    };
    let report = run_batch(&docs, &SimulationConfig::semi_supervised(Mode::Asym), &agents, 1).unwrap();
    assert_eq!((report.attempted, report.aborted), (2, 2));
    assert!(report.conversations.conversations.is_empty());
    assert!(report.failures[0].error.contains("turn 1"));
}
