//! HTTP services: the pairwise annotation API and a mock agent server that
//! speaks the remote agent protocol.

pub mod annotation;
pub mod mock;

pub use annotation::{annotation_router, AnnotationState};
pub use mock::{mock_router, FaultPlan, MockAgentServer, MockState};

use std::future::Future;

pub use axum::Router;
use tokio::net::TcpListener;

/// Serves `router` on `listener` until `shutdown` resolves.
pub async fn serve<F>(listener: TcpListener, router: Router, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router)
        .with_graceful_shutdown(shutdown)
        .await
}
