use clap::Parser;
use meshfield_cli::commands::{self, Cli, Command};

fn main() {
    // clap exits with status 2 on usage errors before we get here.
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenScene { common, out } => commands::gen_scene::run(common, out),
        Command::TrainCodec { common, out } => commands::train_codec::run(common, out),
        Command::FitShape { common, scene_dir, codec, out, ablation, preset } => {
            commands::fit_shape::run(common, scene_dir, codec, out, *ablation, *preset)
        }
        Command::TrainRadiance { common, scene_dir, checkpoint, out } => {
            commands::train_radiance::run(common, scene_dir, checkpoint, out)
        }
        Command::Render { common, scene_dir, checkpoint, out, views, preset, depth } => {
            commands::render::run(
                common,
                scene_dir,
                checkpoint,
                out,
                views.as_deref(),
                *preset,
                *depth,
            )
        }
        Command::Edit { common, checkpoint, out } => commands::edit::run(common, checkpoint, out),
        Command::Eval { gt, renders, out } => commands::eval::run(gt, renders, out),
        Command::Bench { common, scene_dir, checkpoint, views } => {
            commands::bench::run(common, scene_dir, checkpoint, *views)
        }
    };
    if let Err(e) = result {
        eprintln!("error: {}", e);
        std::process::exit(1);
    }
}
