// clef: dimensional analysis and allocation diagnostics for Clef-lite
// sources. `clef check file.clef --targets targets.cfg` runs the pipeline
// and prints the per-target resolution display.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "clef/report.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Clef-lite dimensional type and memory coeffect checker"};
    app.require_subcommand(1);

    auto* check = app.add_subcommand(
        "check", "Type-check a source file and report per-target resolution");
    clef::driver::CheckOptions opts;
    check->add_option("file", opts.source_path, "Clef source file")->required();
    check->add_option("--targets", opts.config_path, "target binding config")
        ->required();
    check->add_option("--report", opts.report_path,
                      "write the structured report to this path");
    check->add_option("--format", opts.format, "output format: text | structured")
        ->default_val("text");
    check->add_option("--show", opts.show,
                      "sections to show: escapes | repr | transfers | all")
        ->default_val("all");
    std::string target_filter;
    auto* tf = check->add_option("--target", target_filter,
                                 "restrict the display to one target");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2
    }

    if (tf->count() > 0) opts.target_filter = target_filter;

    auto result = clef::driver::run_check(opts);
    if (!result.error_message.empty()) {
        std::cerr << "clef: " << result.error_message << "\n";
    }
    if (!result.output.empty()) {
        std::cout << result.output;
        if (result.output.back() != '\n') std::cout << "\n";
    }
    return result.exit_code;
}
