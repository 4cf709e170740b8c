use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
    /// Joint encoder + regressor MSE training (baseline MLP).
    Baseline,
}

impl Phase {
    pub fn tag(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
            Phase::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseReport {
    pub phase: Phase,
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were returned.
    pub best_epoch: usize,
    pub stopping_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub phases: Vec<PhaseReport>,
    pub wall_clock_secs: f64,
    /// Number of corruption calls made while pretraining (validation batches included).
    pub corruption_calls: usize,
}

impl TrainReport {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.phase == phase)
    }

    pub fn final_val_loss(&self) -> Option<f64> {
        self.phases.last().map(|p| p.best_val_loss)
    }

    /// `epoch,phase,train_loss,val_loss`, one line per epoch. No timing data.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,phase,train_loss,val_loss\n");
        for p in &self.phases {
            for r in &p.history {
                let _ = writeln!(out, "{},{},{:?},{:?}", r.epoch, p.phase.tag(), r.train_loss, r.val_loss);
            }
        }
        out
    }
}
