// Minimal out-of-process perceiver used by transport tests: answers "Yes"
// for the comma-separated <dis> list in argv[1], intensity choice argv[2].
#include <iostream>
#include <string>

#include <nlohmann/json.hpp>

int main(int argc, char** argv) {
    const std::string yes_list = argc > 1 ? argv[1] : "";
    const std::string choice = argc > 2 ? argv[2] : "B";
    std::string line;
    while (std::getline(std::cin, line)) {
        if (line.empty()) continue;
        const nlohmann::json req = nlohmann::json::parse(line, nullptr, false);
        if (req.is_discarded()) continue;
        nlohmann::json resp;
        resp["id"] = req.value("id", 0);
        if (req.value("question", "").rfind("What is the intensity", 0) == 0) {
            resp["choice"] = choice;
        } else {
            const std::string dis = req.value("dis", "");
            const bool yes =
                ("," + yes_list + ",").find("," + dis + ",") != std::string::npos;
            resp["answer"] = yes ? "Yes" : "No";
        }
        std::cout << resp.dump() << "\n" << std::flush;
    }
    return 0;
}
