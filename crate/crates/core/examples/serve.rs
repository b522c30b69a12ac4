//! Starts the HTTP server on an ephemeral port, sends it one request over
//! a raw TCP socket and exits.

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::{mpsc, Arc};

use twofold::api::Service;
use twofold::campaign::{init_campaign, Fold1Labels};
use twofold::metrics::MatchConfig;
use twofold::synthetic::{generate_dataset, DatasetSpec};
use twofold::workload::TimingModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gt = generate_dataset(&DatasetSpec::tut_indoor(1))?;
    let state = init_campaign(gt.images, gt.categories, 0.05, Fold1Labels::Manual, &MatchConfig::default())?;
    let service = Arc::new(Service::new(state, TimingModel::default()));

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().expect("runtime");
        let addr: SocketAddr = "127.0.0.1:0".parse().expect("address");
        rt.block_on(twofold::api::serve(service, addr, |b| tx.send(b.addr).expect("main is waiting")))
    });
    let addr = rx.recv().expect("server bound");
    println!("listening on http://{addr}");

    let mut stream = TcpStream::connect(addr)?;
    write!(stream, "GET /api/campaign HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n")?;
    let mut text = String::new();
    stream.read_to_string(&mut text)?;
    println!("{}", text.split("\r\n\r\n").nth(1).unwrap_or(""));
    Ok(())
}
