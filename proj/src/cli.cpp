#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "flowvoc/error.hpp"
#include "flowvoc/pipeline.hpp"

namespace flowvoc {

namespace {

// --some-key flags mirror some_key config entries
std::string flag_for(const std::string& key) {
    std::string f = "--";
    for (char c : key) f += c == '_' ? '-' : c;
    return f;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"flow-matching audio pipeline: synthetic corpus, latent providers, "
                 "vocoder + text-to-latent training, sampling, evaluation"};
    app.require_subcommand(1);

    std::string command;
    std::string config_path;
    FlatConfig flags;

    struct SubDef {
        const char* name;
        const char* help;
    };
    // resolve_defaults owns the key set per command; flags just feed overrides
    const SubDef subs[] = {
        {"synth-data", "generate the synthetic labeled corpus"},
        {"encode-latents", "encode corpus clips with a latent provider"},
        {"train-vocoder", "train the latent-to-waveform model"},
        {"train-dit", "train the text-to-latent transformer"},
        {"sample", "caption -> latents -> waveform"},
        {"vocode", "render one latent file to a waveform"},
        {"eval", "score generated audio against the reference corpus"},
        {"probe", "linear-probe latent providers on the corpus"},
        {"project", "2-D PCA of pooled latents"},
        {"sweep", "guidance x steps grid report"},
        {"grad-check", "finite-difference check of ops and tiny models"},
    };
    for (const SubDef& sd : subs) {
        CLI::App* sub = app.add_subcommand(sd.name, sd.help);
        sub->add_option("--config", config_path, "flat key=value config file");
        FlatConfig defaults = resolve_defaults(sd.name, FlatConfig());
        for (const auto& [key, def_value] : defaults.items()) {
            std::string k = key;
            sub->add_option_function<std::string>(
                flag_for(key),
                [&flags, k](const std::string& v) { flags.set(k, v); },
                "default: " + (def_value.empty() ? "(empty)" : def_value));
        }
        std::string name = sd.name;
        sub->callback([&command, name] { command = name; });
    }

    try {
        app.parse(argc, const_cast<char**>(argv));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
        std::cerr << "error: usage: " << e.what() << "\n";
        return 2;
    }

    FlatConfig merged;
    if (!config_path.empty()) merged = FlatConfig::parse_file(config_path);
    merged.merge(flags);
    FlatConfig resolved = resolve_defaults(command, merged);
    std::cout << "# resolved config: " << command << "\n" << resolved.dump() << std::flush;
    return run_command(command, resolved, std::cout);
}

}  // namespace flowvoc
