//! Wall-clock and CPU time for the sidecar run log.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

pub struct RunTimer {
    command: &'static str,
    wall: Instant,
    cpu_start: f64,
}

fn cpu_seconds() -> f64 {
    let mut usage = std::mem::MaybeUninit::<libc::rusage>::zeroed();
    // SAFETY: getrusage only writes into the provided struct
    let rc = unsafe { libc::getrusage(libc::RUSAGE_SELF, usage.as_mut_ptr()) };
    if rc != 0 {
        return 0.0;
    }
    let u = unsafe { usage.assume_init() };
    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
    tv(u.ru_utime) + tv(u.ru_stime)
}

impl RunTimer {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            wall: Instant::now(),
            cpu_start: cpu_seconds(),
        }
    }

    /// Appends one line to `log_path`. Failures only produce a warning.
    pub fn finish(self, log_path: &Path) {
        let line = format!(
            "{{\"command\":\"{}\",\"wall_seconds\":{:.6},\"cpu_seconds\":{:.6},\"unix_time\":{}}}\n",
            self.command,
            self.wall.elapsed().as_secs_f64(),
            cpu_seconds() - self.cpu_start,
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        );
        let written = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .and_then(|mut f| f.write_all(line.as_bytes()));
        if let Err(e) = written {
            eprintln!(
                "warning: could not write run log {}: {e}",
                log_path.display()
            );
        }
    }
}
