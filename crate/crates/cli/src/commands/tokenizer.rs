use std::path::PathBuf;

use clap::{Args, Subcommand};
use expertscope::corpus::{load_documents, Tokenizer};
use expertscope::Result;

#[derive(Subcommand)]
pub enum TokenizerCommand {
    /// Train a byte-level BPE on a JSON-lines corpus.
    Train(TrainArgs),
    /// Print token ids and pieces for a text.
    Encode(EncodeArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 1024)]
    vocab_size: usize,
    #[arg(long, default_value = "v1")]
    version: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct EncodeArgs {
    #[arg(long)]
    text: String,
    /// Tokenizer JSON; the bundled tokenizer when omitted.
    #[arg(long)]
    tokenizer: Option<PathBuf>,
}

pub fn run(command: TokenizerCommand) -> Result<()> {
    match command {
        TokenizerCommand::Train(a) => {
            let (texts, _) = load_documents(&a.corpus)?;
            let tok = Tokenizer::train(&texts, a.vocab_size, &a.version)?;
            tok.save(&a.out)?;
            println!("{} {}", tok.id(), a.out.display());
        }
        TokenizerCommand::Encode(a) => {
            let tok = match &a.tokenizer {
                Some(p) => Tokenizer::load(p)?,
                None => Tokenizer::shipped().clone(),
            };
            let ids = tok.encode(a.text.as_bytes());
            let pieces: Vec<String> = ids.iter().map(|t| tok.token_str(*t)).collect();
            println!("{}", serde_json::json!({ "tokenizer": tok.id(), "ids": ids, "pieces": pieces }));
        }
    }
    Ok(())
}
