use std::net::SocketAddr;
use std::sync::{mpsc, Arc};
use std::thread::JoinHandle;
use std::time::Duration;

use anyhow::{anyhow, bail, Context as _, Result};
use kbench_core::recon::ReconMethod;
use kbench_core::sampling::Track;
use kbench_eval::protocol::Phase;
use kbench_eval::service::{Service, ServiceConfig, SubmissionManifest};
use reqwest::blocking::{multipart, Client, RequestBuilder};
use tokio::sync::oneshot;

use super::recon::submission_dir;
use crate::run::{require_dir, Context};

/// A running eval-service on its own runtime thread.
pub struct Server {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl Server {
    /// Opens the service over the run directory and binds `bind` (the config
    /// value when `None`).
    pub fn start(ctx: &Context, bind: Option<&str>) -> Result<Self> {
        require_dir(&ctx.dataset_dir(), "gen")?;
        let eval = &ctx.config.eval;
        let svc = Service::open(ServiceConfig {
            dataset_dir: ctx.dataset_dir(),
            data_dir: ctx.eval_dir(),
            study_dir: Some(ctx.study_dir()),
            clock: eval.clock.clock(),
            team_tokens: eval.teams.clone(),
            admin_token: eval.admin_token.clone(),
        })?;
        let bind = bind.unwrap_or(&eval.bind).to_string();
        let (addr_tx, addr_rx) = mpsc::channel();
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || -> Result<()> {
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind(&bind).await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = addr_tx.send(Err(anyhow!("binding {bind}: {e}")));
                        return Ok(());
                    }
                };
                let _ = addr_tx.send(Ok(listener.local_addr()?));
                kbench_eval::server::serve(Arc::new(svc), listener, async {
                    let _ = stop_rx.await;
                })
                .await?;
                Ok(())
            })
        });
        let addr = addr_rx
            .recv()
            .map_err(|_| anyhow!("server thread exited before binding"))??;
        Ok(Self {
            addr,
            shutdown: Some(stop_tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Graceful shutdown; waits for in-flight requests.
    pub fn stop(mut self) -> Result<()> {
        self.shutdown_and_join()
    }

    fn shutdown_and_join(&mut self) -> Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| anyhow!("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}

/// `kbench serve`: runs until interrupted.
pub fn run(ctx: &Context, bind: Option<&str>) -> Result<()> {
    let server = Server::start(ctx, bind)?;
    println!("listening on {}", server.url());
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?
        .block_on(tokio::signal::ctrl_c())?;
    server.stop()
}

fn client() -> Result<Client> {
    Ok(Client::builder().timeout(Duration::from_secs(1800)).build()?)
}

fn send(req: RequestBuilder, token: Option<&str>) -> Result<serde_json::Value> {
    let req = match token {
        Some(t) => req.bearer_auth(t),
        None => req,
    };
    let resp = req.send()?;
    let status = resp.status();
    let body: serde_json::Value = resp.json().context("decoding server response")?;
    if !status.is_success() {
        bail!(
            "server answered {status}: {} ({})",
            body["error"].as_str().unwrap_or("unknown"),
            body["detail"].as_str().unwrap_or("")
        );
    }
    Ok(body)
}

/// Uploads a method's reconstructions for one leaderboard as `team`.
pub fn submit(
    ctx: &Context,
    url: &str,
    method: ReconMethod,
    phase: Phase,
    track: Track,
    team: &str,
    token: Option<&str>,
) -> Result<serde_json::Value> {
    let dir = submission_dir(&ctx.recon_dir(method), phase, track);
    require_dir(&dir, &format!("recon --method {method}"))?;
    let manifest = SubmissionManifest {
        team_id: team.to_string(),
        description: format!("{method} baseline"),
        links: Vec::new(),
    };
    let mut form = multipart::Form::new().part(
        "manifest",
        multipart::Part::text(serde_json::to_string(&manifest)?).mime_str("application/json")?,
    );
    for name in crate::run::files_under(&dir)? {
        let bytes = std::fs::read(dir.join(&name))?;
        let file_name = name.to_string_lossy().into_owned();
        form = form.part(file_name.clone(), multipart::Part::bytes(bytes).file_name(file_name));
    }
    let url = format!("{}/api/{phase}/{track}/submissions", url.trim_end_matches('/'));
    send(client()?.post(url).multipart(form), token)
}

pub fn close_window(url: &str, token: Option<&str>) -> Result<serde_json::Value> {
    let url = format!("{}/api/admin/close_window", url.trim_end_matches('/'));
    send(client()?.post(url), token)
}
