// Generates a toy world fixture plus the matching question dataset, for
// exercising the pipeline without a model server.

#include "ppcv/toy_world.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"toy world generator"};
    std::uint64_t seed = 1;
    int templates = 20;
    double injected = 0.5;
    std::string world_out = "toy_world.json";
    std::string dataset_out = "toy_dataset.jsonl";
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--templates", templates, "number of templates");
    app.add_option("--injected-fraction", injected, "fraction of templates with an error injection");
    app.add_option("--world-out", world_out, "world JSON output path");
    app.add_option("--dataset-out", dataset_out, "dataset JSONL output path");
    CLI11_PARSE(app, argc, argv);

    try {
        const auto world = ppcv::toy::generate_world({seed, templates, injected});
        ppcv::toy::save_world(world, world_out);

        std::ofstream ds(dataset_out);
        if (!ds) {
            std::cerr << "cannot write " << dataset_out << "\n";
            return 2;
        }
        for (const auto& t : world.templates) {
            nlohmann::json j;
            j["id"] = t.id;
            j["question"] = t.variants.front();
            j["answer"] = t.gold;
            j["type"] = "numeric";
            ds << j.dump() << "\n";
        }
        std::cout << "wrote " << world_out << " (" << world.templates.size() << " templates) and "
                  << dataset_out << "\n";
    } catch (const std::exception& e) {
        std::cerr << "toygen: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
