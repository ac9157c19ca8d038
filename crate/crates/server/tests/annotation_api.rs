use std::path::{Path, PathBuf};

use reqwest::StatusCode;
use serde_json::{json, Value};
use simseek::analysis::HistoryTurn;
use simseek::humaneval::{Candidate, JudgmentTask, Session, TaskDocument, VoteLog};
use simseek_server::{annotation_router, serve, AnnotationState};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

fn task(id: &str, question_b: &str) -> JudgmentTask {
    JudgmentTask {
        task_id: id.into(),
        document: TaskDocument {
            doc_id: "doc-1".into(),
            title: "Kon-Tiki".into(),
            section_title: "Voyage".into(),
            passage: "The crew sailed for 101 days.".into(),
        },
        history: vec![HistoryTurn {
            q: "Who built the raft?".into(),
            a: "Thor Heyerdahl".into(),
        }],
        turn: 2,
        candidate_a: Candidate {
            question: "How long did they sail?".into(),
            answer: "101 days".into(),
            unanswerable: false,
        },
        candidate_b: Candidate {
            question: question_b.into(),
            answer: "The crew".into(),
            unanswerable: false,
        },
        source_a: "human-quac".into(),
        source_b: "simseek-sym".into(),
    }
}

struct Running {
    base: String,
    client: reqwest::Client,
    stop: Option<oneshot::Sender<()>>,
    handle: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Running {
    async fn start(votes: &Path, panel: usize, static_dir: Option<PathBuf>) -> Self {
        let tasks = vec![task("t1", "Who sailed?"), task("t2", "Anything else?")];
        let session = Session::new(tasks, VoteLog::open(votes).unwrap(), panel).unwrap();
        let router = annotation_router(AnnotationState::new(session, 2000, 7), static_dir);
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel::<()>();
        let handle = tokio::spawn(serve(listener, router, async {
            let _ = rx.await;
        }));
        Self {
            base,
            client: reqwest::Client::new(),
            stop: Some(tx),
            handle,
        }
    }

    async fn stop(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.handle.await.unwrap().unwrap();
    }

    async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(format!("{}{path}", self.base)).send().await.unwrap()
    }

    async fn vote(&self, body: Value) -> reqwest::Response {
        self.client
            .post(format!("{}/api/votes", self.base))
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    async fn annotator(&self) -> String {
        let v: Value = self.get("/api/session/new").await.json().await.unwrap();
        v["annotator_id"].as_str().unwrap().to_owned()
    }
}

fn ballot(task: &str, annotator: &str, side: &str) -> Value {
    json!({
        "task_id": task,
        "annotator_id": annotator,
        "choices": {"adequacy": side, "informativeness": side, "relevance": side, "accuracy": side}
    })
}

#[tokio::test]
async fn annotation_flow() {
    let dir = tempfile::tempdir().unwrap();
    let votes = dir.path().join("votes.log");
    let app = Running::start(&votes, 3, None).await;

    let a1 = app.annotator().await;
    let a2 = app.annotator().await;
    assert_ne!(a1, a2);

    let resp = app.get(&format!("/api/tasks/next?annotator={a1}")).await;
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.text().await.unwrap();
    assert!(!body.contains("human-quac") && !body.contains("simseek-sym"));
    assert!(!body.contains("source"));
    let shown: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(shown["task_id"], "t1");
    assert_eq!(shown["criteria"].as_array().unwrap().len(), 4);
    assert_eq!(shown["history"][0]["q"], "Who built the raft?");

    assert_eq!(app.vote(ballot("t1", &a1, "A")).await.status(), StatusCode::CREATED);
    // Resubmission leaves the log unchanged.
    assert_eq!(app.vote(ballot("t1", &a1, "B")).await.status(), StatusCode::CONFLICT);
    assert_eq!(app.vote(ballot("nope", &a1, "B")).await.status(), StatusCode::NOT_FOUND);
    assert_eq!(app.vote(ballot("t1", "", "B")).await.status(), StatusCode::BAD_REQUEST);
    // Skipping a criterion is not allowed.
    let partial = json!({"task_id": "t1", "annotator_id": a2, "choices": {"adequacy": "A"}});
    assert!(app.vote(partial).await.status().is_client_error());
    let garbage = app
        .client
        .post(format!("{}/api/votes", app.base))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert!(garbage.status().is_client_error());

    // a1 already judged t1, so the next task for a1 is t2.
    let next: Value = app.get(&format!("/api/tasks/next?annotator={a1}")).await.json().await.unwrap();
    assert_eq!(next["task_id"], "t2");
    assert_eq!(app.get("/api/tasks/next").await.status(), StatusCode::BAD_REQUEST);

    for ann in [a2.clone(), "a3".to_owned()] {
        assert_eq!(app.vote(ballot("t1", &ann, "B")).await.status(), StatusCode::CREATED);
    }
    for ann in [a1.clone(), a2.clone(), "a3".to_owned()] {
        assert_eq!(app.vote(ballot("t2", &ann, "A")).await.status(), StatusCode::CREATED);
    }
    assert_eq!(
        app.get("/api/tasks/next?annotator=fresh").await.status(),
        StatusCode::NO_CONTENT
    );

    let report: Value = app.get("/api/report").await.json().await.unwrap();
    assert_eq!(report["n_tasks"], 2);
    // t2 asks "Anything else?" and is excluded.
    assert_eq!(report["excluded_tasks"], 1);
    let pair = &report["pairs"][0];
    assert_eq!(pair["first"], "human-quac");
    let adequacy = &pair["criteria"][0];
    assert_eq!(adequacy["criterion"], "adequacy");
    assert_eq!(adequacy["n_tasks"], 1);
    // Votes A, B, B on t1: side B (simseek-sym) wins.
    assert_eq!(adequacy["wins_second"], 1);
    assert_eq!(adequacy["winner"], "simseek-sym");
    let again: Value = app.get("/api/report").await.json().await.unwrap();
    assert_eq!(report, again);
    app.stop().await;

    let lines = std::fs::read_to_string(&votes).unwrap();
    assert_eq!(lines.lines().count(), 24);

    // Restart on the same log: state is replayed.
    let app = Running::start(&votes, 3, None).await;
    assert_eq!(app.vote(ballot("t1", &a1, "B")).await.status(), StatusCode::CONFLICT);
    let replayed: Value = app.get("/api/report").await.json().await.unwrap();
    assert_eq!(replayed, report);
    app.stop().await;
}

#[tokio::test]
async fn static_assets_are_served_next_to_the_api() {
    let dir = tempfile::tempdir().unwrap();
    let assets = dir.path().join("ui");
    std::fs::create_dir(&assets).unwrap();
    std::fs::write(assets.join("index.html"), "<h1>annotate</h1>").unwrap();
    let app = Running::start(&dir.path().join("v.log"), 5, Some(assets)).await;
    let index = app.get("/").await;
    assert_eq!(index.status(), StatusCode::OK);
    assert_eq!(index.text().await.unwrap(), "<h1>annotate</h1>");
    assert_eq!(app.get("/missing.js").await.status(), StatusCode::NOT_FOUND);
    assert_eq!(app.get("/api/session/new").await.status(), StatusCode::OK);
    app.stop().await;
}
