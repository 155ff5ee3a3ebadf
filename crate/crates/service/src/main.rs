use tdoa_service::{router, ServiceConfig};

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let bind = std::env::var("TDOA_BIND").unwrap_or_else(|_| "127.0.0.1:8787".to_string());
    let app = router(&ServiceConfig::from_env());
    let listener = tokio::net::TcpListener::bind(&bind).await?;
    eprintln!("tdoa-service listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
