// amc: train, evaluate, and inspect attention-guided multi-modal correlation
// ranking models on click-through bundles.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "amc/commands.hpp"
#include "amc/config.hpp"

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> sets;
    std::string checkpoint;
    std::string out;
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "key=value config file");
    cmd->add_option("--set", args.sets, "override a config key (repeatable)");
    cmd->add_option("--checkpoint", args.checkpoint, "checkpoint path");
    cmd->add_option("--out", args.out, "report directory");
    cmd->add_option("--seed", args.seed, "random seed override");
}

amc::RunConfig make_run_config(const CommonArgs& args) {
    amc::RunConfig cfg = amc::parse_run_config(args.config_path, args.sets);
    if (!args.checkpoint.empty()) cfg.checkpoint = args.checkpoint;
    if (!args.out.empty()) cfg.out = args.out;
    if (args.seed) cfg.seed = *args.seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"attention-guided multi-modal correlation ranking"};
    app.require_subcommand(1);

    CommonArgs train_args, eval_args, rank_args, grad_args, synth_args;
    std::string rank_query;
    int rank_top_k = 10;
    bool rank_explain = false;

    CLI::App* train_cmd = app.add_subcommand("train", "train a model on a bundle");
    add_common(train_cmd, train_args);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a bundle");
    add_common(eval_cmd, eval_args);

    CLI::App* rank_cmd = app.add_subcommand("rank", "rank all images for one query");
    add_common(rank_cmd, rank_args);
    rank_cmd->add_option("query_id", rank_query, "query id from the bundle")->required();
    rank_cmd->add_option("top_k", rank_top_k, "results to emit (default 10)");
    rank_cmd->add_flag("--explain", rank_explain, "dump attention diagnostics per result");

    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(grad_cmd, grad_args);

    CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic bundle");
    add_common(synth_cmd, synth_args);

    CLI11_PARSE(app, argc, argv);

    try {
        if (train_cmd->parsed()) {
            return amc::cmd_train(make_run_config(train_args), std::cout);
        }
        if (eval_cmd->parsed()) {
            return amc::cmd_eval(make_run_config(eval_args), std::cout);
        }
        if (rank_cmd->parsed()) {
            return amc::cmd_rank(make_run_config(rank_args), rank_query, rank_top_k,
                                 rank_explain, std::cout);
        }
        if (grad_cmd->parsed()) {
            return amc::cmd_gradcheck(make_run_config(grad_args), std::cout);
        }
        if (synth_cmd->parsed()) {
            amc::SynthSpec spec = amc::parse_synth_spec(synth_args.config_path, synth_args.sets);
            if (synth_args.seed) spec.seed = *synth_args.seed;
            return amc::cmd_synth(spec, synth_args.out, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return amc::exit_code_for(e);
    }
    return 0;
}
