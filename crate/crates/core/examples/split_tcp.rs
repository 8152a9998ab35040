//! Server and client roles talking over a loopback TCP connection.
//!
//! Run with `cargo run --release --example split_tcp`.

use std::net::{TcpListener, TcpStream};
use std::thread;

use hesplit::config::Config;
use hesplit::protocol::{run_client, run_server, Channel, ServerData, TcpTransport};

fn main() -> hesplit::Result<()> {
    let cfg = Config::from_json(
        r#"{
            "model": { "layer_sizes": [6, 16, 8, 3], "split": 1 },
            "crypto": { "backend": "noise-sim", "ring_size_log": 11, "log_qp": 218, "scale_log": 30 },
            "protocol": { "epochs": 3, "batch_size": 30, "learning_rate": 2.0 },
            "data": { "source": "synth", "samples": 150, "features": 6, "classes": 3 }
        }"#,
    )?;
    let data = cfg.load_dataset()?;
    let session = cfg.protocol.session_id;
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;

    let server_cfg = cfg.clone();
    let server_data = ServerData { samples: data.len(), features: Some(data.features.clone()) };
    let server = thread::spawn(move || -> hesplit::Result<_> {
        let (stream, _) = listener.accept()?;
        let ch = Channel::new(Box::new(TcpTransport::new(stream)?), session);
        run_server(&server_cfg, &server_data, ch)
    });

    let ch = Channel::new(Box::new(TcpTransport::new(TcpStream::connect(addr)?)?), session);
    let client = run_client(&cfg, &data, ch)?;
    let server = server.join().expect("server thread")?;

    for (s, c) in server.epochs.iter().zip(&client.epochs) {
        println!(
            "epoch {}: loss {:.5}, accuracy {:.3}, server sent {} bytes, {} rotations",
            s.epoch, c.loss, c.accuracy, s.bytes_sent, s.rotations
        );
    }
    println!("client traffic: {:?}", client.traffic);
    Ok(())
}
