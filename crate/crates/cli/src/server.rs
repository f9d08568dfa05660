use std::io::Write;
use std::sync::Arc;

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use claimlens_core::service::{Inbound, Outbound, OutboundBody, SessionManager};

type Shared = Arc<SessionManager>;

pub fn router(manager: Shared) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(manager)
}

/// Binds, prints `listening on <addr>` and serves until ctrl-c.
pub async fn serve(manager: Shared, addr: &str) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    axum::serve(listener, router(manager))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(manager): State<Shared>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, manager))
}

fn parse_error(message: String) -> Outbound {
    Outbound {
        session_id: None,
        seq: 0,
        body: OutboundBody::Error {
            in_reply_to: 0,
            code: "parse".into(),
            message,
        },
    }
}

async fn connection(mut socket: WebSocket, manager: Shared) {
    while let Some(Ok(msg)) = socket.recv().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let replies = match serde_json::from_str::<Inbound>(text.as_str()) {
            Ok(inbound) => {
                let m = manager.clone();
                match tokio::task::spawn_blocking(move || m.handle(&inbound)).await {
                    Ok(r) => r,
                    Err(e) => vec![parse_error(format!("handler failed: {e}"))],
                }
            }
            Err(e) => vec![parse_error(e.to_string())],
        };
        for reply in replies {
            let Ok(frame) = serde_json::to_string(&reply) else {
                continue;
            };
            if socket.send(Message::Text(frame.into())).await.is_err() {
                return;
            }
        }
    }
}
